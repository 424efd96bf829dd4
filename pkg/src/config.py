import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _flag(name: str, default: str = "False") -> bool:
    return os.getenv(name, default).lower() == "true"


class Settings:
    APP_NAME: str = os.getenv("APP_NAME", "hamilton-jacobi-toolkit")
    VERSION: str = os.getenv("VERSION", "0.1.0")
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")
    LOG_LEVEL: str = (
        "DEBUG"
        if os.getenv("ENVIRONMENT") == "test"
        else os.getenv("LOG_LEVEL", "INFO")
    )
    LOG_TO_FILE: bool = _flag("LOG_TO_FILE")
    LOG_DIR: str = os.getenv("LOG_DIR", "logs")

    # Numerical policy shared by every module
    DEFAULT_TOLERANCE: float = float(os.getenv("DEFAULT_TOLERANCE", "1e-8"))
    NEWTON_TOLERANCE: float = float(os.getenv("NEWTON_TOLERANCE", "1e-12"))
    NEWTON_MAX_ITER: int = int(os.getenv("NEWTON_MAX_ITER", "50"))
    SINGULAR_DET: float = float(os.getenv("SINGULAR_DET", "1e-10"))
    CONDITION_LIMIT: float = float(os.getenv("CONDITION_LIMIT", "1e12"))
    SKIP_FRACTION_LIMIT: float = float(os.getenv("SKIP_FRACTION_LIMIT", "0.2"))
    FD_STEP: float = float(os.getenv("FD_STEP", "1e-6"))

    N_JOBS: int = int(os.getenv("N_JOBS", "1"))
    REPORT_TIMING: bool = _flag("REPORT_TIMING")


settings = Settings()
