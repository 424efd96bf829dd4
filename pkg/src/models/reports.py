from typing import Any, Dict, Iterable, List, Literal, Optional

from pydantic import BaseModel, Field, computed_field

Status = Literal["pass", "fail", "inconclusive"]
RunStatus = Literal["pass", "fail", "inconclusive", "error"]

_SEVERITY = {"pass": 0, "inconclusive": 1, "fail": 2, "error": 3}


def worst_status(statuses: Iterable[str]) -> Any:
    """Most severe status of a collection; an empty collection is inconclusive."""
    statuses = list(statuses)
    if not statuses:
        return "inconclusive"
    return max(statuses, key=lambda s: _SEVERITY[s])


class ResidualReport(BaseModel):
    op: str = Field(..., description="Operation that produced the residuals")
    tolerance: float = Field(..., description="Pass/fail threshold on max_norm")
    n_samples: int = Field(..., description="Number of sample points requested")
    n_skipped: int = Field(0, description="Samples skipped after domain or solver failures")
    max_norm: Optional[float] = Field(
        None, description="Largest residual norm over evaluated samples"
    )
    argmax_sample: Optional[List[float]] = Field(None, description="Sample where max_norm occurs")
    per_sample: Optional[List[Optional[float]]] = Field(
        None, description="Residual norm per sample, null where skipped"
    )
    status: Status
    notes: List[str] = []

    @property
    def passed(self) -> bool:
        return self.status == "pass"


class DefectSummary(BaseModel):
    """Several named residual reports produced by one operation."""

    op: str
    defects: Dict[str, ResidualReport] = {}
    details: Dict[str, Any] = {}
    notes: List[str] = []

    @computed_field  # type: ignore[prop-decorator]
    @property
    def status(self) -> Status:
        return worst_status(report.status for report in self.defects.values())

    def __getitem__(self, name: str) -> ResidualReport:
        return self.defects[name]

    def defect(self, name: str) -> Optional[float]:
        report = self.defects.get(name)
        return None if report is None else report.max_norm


class StandardHJReport(DefectSummary):
    @property
    def closedness_defect(self) -> Optional[float]:
        return self.defect("closedness")

    @property
    def dH_defect(self) -> Optional[float]:
        return self.defect("dH")


class LagrangianHJReport(DefectSummary):
    @property
    def pullback_omega_defect(self) -> Optional[float]:
        return self.defect("pullback_omega")

    @property
    def dE_defect(self) -> Optional[float]:
        return self.defect("dE")

    @property
    def generalized_defect(self) -> Optional[float]:
        return self.defect("generalized")

    @property
    def eq4_defect(self) -> Optional[float]:
        return self.defect("eq4")


class HigherHJReport(DefectSummary):
    @property
    def tangency_defect(self) -> Optional[float]:
        return self.defect("tangency")

    @property
    def pde_defect(self) -> Optional[float]:
        return self.defect("pde")

    @property
    def closedness_defect(self) -> Optional[float]:
        return self.defect("closedness")

    @property
    def energy_defect(self) -> Optional[float]:
        return self.defect("energy")


class FamilyReport(DefectSummary):
    """Complete solutions and complete slicings: per-parameter residuals plus
    local-diffeomorphism evidence (``details['min_abs_det']``)."""

    @property
    def min_abs_det(self) -> Optional[float]:
        return self.details.get("min_abs_det")

    @property
    def drift(self) -> Optional[float]:
        return self.defect("constants_drift")


class EquilibriumReport(DefectSummary):
    @property
    def momentum_drift(self) -> Optional[float]:
        return self.details.get("momentum_drift")

    @property
    def configuration_drift(self) -> Optional[float]:
        return self.details.get("configuration_drift")


class CheckResult(BaseModel):
    name: str = Field(..., description="Check identifier, e.g. 'dH'")
    max_defect: Optional[float] = None
    tolerance: float
    status: RunStatus
    notes: List[str] = []


class ErrorInfo(BaseModel):
    type: str
    message: str
    path: Optional[str] = None
    line: Optional[int] = None
    position: Optional[int] = None


class RunReport(BaseModel):
    producer: str
    version: str
    verb: str
    config: str = Field(..., description="Config file name")
    config_digest: str = Field(..., description="sha256 of config bytes and run overrides")
    seed: int
    prng: str = "PCG64"
    tolerance: float
    status: RunStatus
    exit_code: int
    checks: List[CheckResult] = []
    details: Dict[str, Any] = {}
    artifacts: List[str] = []
    error: Optional[ErrorInfo] = None
    timing: Optional[Dict[str, float]] = None
