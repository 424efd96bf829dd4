import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

SystemType = Literal["hamiltonian", "lagrangian", "higher", "field"]
Block = Literal["momentum", "configuration", "both"]
Axis = Tuple[float, float, int]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemBlock(_Block):
    type: SystemType
    n: int = Field(1, ge=1, description="Degrees of freedom, or fiber dimension for fields")
    m: Optional[int] = Field(None, ge=1, description="Base dimension of a field theory")
    k: Optional[int] = Field(None, ge=1, description="Order of a higher-order Lagrangian")
    H: Optional[str] = None
    L: Optional[str] = None


class SolutionBlock(_Block):
    alpha: Optional[List[str]] = Field(None, description="1-form components over q")
    S: Optional[str] = Field(None, description="Generating scalar over the base (and params)")
    X: Optional[List[str]] = Field(None, description="Vector field components over q")
    s: Optional[List[str]] = Field(None, description="Jet section components")
    W: Optional[List[str]] = Field(None, description="Field HJ candidate W^i(x, y)")
    psi: Optional[List[str]] = Field(None, description="Jet field psi^a_i(x, y)")
    params: List[str] = []
    values: Dict[str, float] = {}


class CanonicalBlock(_Block):
    n: int = Field(1, ge=1)
    S2: Optional[str] = Field(None, description="Type-1 generator over (q, qt)")
    H: Optional[str] = None
    constant_block: Optional[Block] = None
    guess: Optional[List[str]] = Field(None, description="Newton seed for qt over (q, p)")
    transform: Optional[List[str]] = Field(None, description="Explicit map over (q, p)")


class CheckBlock(_Block):
    grid: Dict[str, Axis] = {}
    samples: Optional[int] = Field(None, ge=1, description="Random samples instead of the grid")
    seed: int = 0
    tolerance: Optional[float] = Field(None, gt=0)
    T: Optional[float] = Field(None, ge=0)
    dt: Optional[float] = Field(None, gt=0)
    starts: List[List[float]] = []
    q0: Optional[List[float]] = None
    integrator: Literal["rk4", "midpoint"] = "midpoint"
    energy: Optional[float] = None
    per_sample: bool = False


class EvolveBlock(_Block):
    N: int = Field(256, ge=8)
    length: float = Field(2.0 * math.pi, gt=0)
    T: float = Field(..., ge=0)
    dt: float = Field(..., gt=0)
    y0: List[str]
    pt0: List[str]
    px0: Optional[List[str]] = None
    exact: Optional[List[str]] = Field(None, description="Reference y(t, x) for the final time")
    snapshots: int = Field(64, ge=2)


class RunConfig(_Block):
    system: Optional[SystemBlock] = None
    solution: SolutionBlock = SolutionBlock()
    canonical: Optional[CanonicalBlock] = None
    check: CheckBlock = CheckBlock()
    evolve: Optional[EvolveBlock] = None
