import os

# Set environment variables before importing settings
os.environ['ENVIRONMENT'] = 'test'
os.environ['N_JOBS'] = '1'
os.environ['REPORT_TIMING'] = 'false'

import json
from pathlib import Path

import numpy as np
import pytest

from src.main import main
from src.services.exprcore import ScalarField
from src.services.hamiltonian_hj import HamiltonianSystem, OneFormSection
from src.services.lagrangian_hj import LagrangianSystem

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def configs_dir():
    return CONFIGS


@pytest.fixture
def free_particle():
    return HamiltonianSystem.from_text("p1^2/2", 1)


@pytest.fixture
def oscillator():
    return HamiltonianSystem.from_text("(p1^2 + q1^2)/2", 1)


@pytest.fixture
def gravity():
    return HamiltonianSystem.from_text("p1^2/2 + q1", 1)


@pytest.fixture
def oscillator_level():
    """alpha = sqrt(2 - q^2), the oscillator energy level 1."""
    return OneFormSection.from_expressions(["sqrt(2 - q1^2)"])


@pytest.fixture
def oscillator_lagrangian():
    return LagrangianSystem.from_text("v1^2/2 - q1^2/2", 1)


@pytest.fixture
def line_samples():
    return [[q] for q in np.linspace(-0.9, 0.9, 19)]


@pytest.fixture
def field():
    def build(text, *names):
        return ScalarField.compile(text, list(names))

    return build


@pytest.fixture
def write_config(tmp_path):
    def write(text, name="run.toml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def read_report(out_dir):
    def read():
        return json.loads((out_dir / "report.json").read_text())

    return read


@pytest.fixture
def run_cli(out_dir):
    """Run the CLI like the console script would, writing into ``out_dir``."""

    def run(verb, config, *flags):
        return main([verb, str(config), "--out", str(out_dir), "--quiet", *flags])

    return run
