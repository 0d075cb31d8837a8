"""Structs for experiment configs and reports."""

from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.inequalities import InequalityReport, TrialFamily
from src.numerics import QuadratureResult
from src.solvers.amp import AmpScanResult, LoadSpec, indicator_load
from src.solvers.eigen import EigenSummary, SolverOptions
from src.solvers.shooting import DEFAULT_STEPS, Anchor, AsymptoticsReport
from src.weights import AdmissibilityReport, ProblemSpec, admissible_example_spec

__all__ = [
    "AdmissibilityConfig",
    "AmpConfig",
    "AmpResults",
    "Command",
    "CommandResults",
    "EigenResults",
    "ExperimentConfig",
    "InequalitiesConfig",
    "InequalityResults",
    "MeshConfig",
    "Provenance",
    "REPORT_SCHEMA_VERSION",
    "Report",
    "ShootConfig",
    "ShootResults",
    "SolverConfig",
    "WeightsResults",
]

REPORT_SCHEMA_VERSION = "1.0"

Command = Literal["check-weights", "eigen", "amp-scan", "shoot", "verify-inequalities"]
InequalityKind = Literal["ckn_basic", "ckn_generalized", "embedding", "picone"]


class MeshConfig(BaseModel):
    """Element count and grading of the radial mesh."""

    model_config = ConfigDict(extra="forbid")

    M: int = Field(default=200, ge=2)
    grading: float = Field(default=1.0, ge=1.0)


class SolverConfig(BaseModel):
    """Eigensolver tolerances."""

    model_config = ConfigDict(extra="forbid")

    tol: float = Field(default=1e-9, gt=0)
    max_iter: int = Field(default=500, ge=1)
    truncation_study: bool = False
    # Cross-check with the dense pencil when p = 2.
    oracle: bool = True

    def options(self, **overrides) -> SolverOptions:
        """SolverOptions for this section."""
        return SolverOptions(tol=self.tol, max_iter=self.max_iter, **overrides)


class AmpConfig(BaseModel):
    """Perturbed-problem scan around lambda1."""

    model_config = ConfigDict(extra="forbid")

    h: LoadSpec = Field(default_factory=lambda: indicator_load(0.5, 1.0))
    # Absolute window; when unset, window_rel is taken in units of lambda1.
    window: Optional[Tuple[float, float]] = None
    window_rel: Tuple[float, float] = (0.8, 1.2)
    steps: int = Field(default=16, ge=0)
    E: Optional[Tuple[float, float]] = None
    tol: float = Field(default=1e-10, gt=0)
    dump_solutions: bool = False

    @model_validator(mode="after")
    def _check_window(self):
        lo, hi = self.window if self.window is not None else self.window_rel
        if not lo < hi:
            raise ValueError(f"AMP window must satisfy lo < hi, got ({lo}, {hi}).")
        if self.E is not None and not self.E[0] < self.E[1]:
            raise ValueError(f"Region E must satisfy a < b, got {self.E}.")
        return self


class ShootConfig(BaseModel):
    """Shooting for p = N = 2."""

    model_config = ConfigDict(extra="forbid")

    R_big: float = Field(default=1e3, gt=0)
    steps: int = Field(default=DEFAULT_STEPS, ge=16)
    bracket: Optional[Tuple[float, float]] = None
    anchor: Anchor = "infinity"
    eps_sensitivity: bool = True
    compare_fem: bool = True


class InequalitiesConfig(BaseModel):
    """Trial families and the inequalities to test."""

    model_config = ConfigDict(extra="forbid")

    family: TrialFamily = TrialFamily()
    # Adds regularized near-extremal powers to the basic CKN scan.
    near_extremal: bool = True
    checks: List[InequalityKind] = ["ckn_basic", "ckn_generalized", "embedding", "picone"]
    picone_M: int = Field(default=200, ge=2)
    # Defaults to the embedding constant computed from spec.v and spec.w.
    embedding_C: Optional[float] = None


class AdmissibilityConfig(BaseModel):
    """Sample grid and quadrature tolerance for check-weights."""

    model_config = ConfigDict(extra="forbid")

    grid_size: int = Field(default=64, ge=16)
    tol: float = Field(default=1e-10, gt=0)


class ExperimentConfig(BaseModel):
    """One experiment: a command, a problem and the settings of every module."""

    model_config = ConfigDict(extra="forbid")

    command: Command = "eigen"
    spec: ProblemSpec = Field(default_factory=admissible_example_spec)
    mesh: MeshConfig = MeshConfig()
    solver: SolverConfig = SolverConfig()
    amp: AmpConfig = AmpConfig()
    shoot: ShootConfig = ShootConfig()
    inequalities: InequalitiesConfig = InequalitiesConfig()
    admissibility: AdmissibilityConfig = AdmissibilityConfig()
    out_dir: Path = Path("out")
    seed: int = Field(default=0, ge=0, lt=2**64)
    charts: bool = False

    @model_validator(mode="after")
    def _check_command(self):
        spec = self.spec
        if self.command == "check-weights" and (spec.v is None or spec.w is None):
            raise ValueError("check-weights needs spec.v and spec.w.")
        if self.command == "shoot":
            if spec.N != 2 or spec.p != 2:
                raise ValueError(f"shoot needs p = N = 2, got N={spec.N}, p={spec.p}.")
            if spec.K.positivity != "strictly_positive":
                raise ValueError("shoot needs K declared strictly_positive.")
            if not spec.eps < self.shoot.R_big:
                raise ValueError(f"shoot.R_big={self.shoot.R_big} must exceed eps={spec.eps}.")
        if self.command == "amp-scan" and self.amp.E is not None:
            a, b = self.amp.E
            if not spec.eps <= a < b <= spec.R:
                raise ValueError(f"amp.E={self.amp.E} must lie inside [{spec.eps}, {spec.R}].")
        if self.command == "verify-inequalities":
            checks = self.inequalities.checks
            if "ckn_generalized" in checks and not spec.N - spec.p - spec.p * spec.alpha > 0:
                raise ValueError("ckn_generalized needs N - p - p alpha > 0 (p*_α undefined).")
            if "embedding" in checks and self.inequalities.embedding_C is None and (
                spec.v is None or spec.w is None
            ):
                raise ValueError("embedding needs spec.v and spec.w, or inequalities.embedding_C.")
        return self


class WeightsResults(BaseModel):
    """check-weights output."""

    command: Literal["check-weights"] = "check-weights"
    admissibility: AdmissibilityReport
    # Embedding constant recomputed at half the tolerance.
    embedding_halved_tol: Optional[QuadratureResult] = None
    embedding_stable: Optional[bool] = None
    boundedness_integral: Optional[QuadratureResult] = None


class EigenResults(BaseModel):
    """eigen output."""

    command: Literal["eigen"] = "eigen"
    eigen: EigenSummary
    oracle: Optional[EigenSummary] = None
    oracle_rel_diff: Optional[float] = None


class AmpResults(BaseModel):
    """amp-scan output."""

    command: Literal["amp-scan"] = "amp-scan"
    eigen: EigenSummary
    scan: AmpScanResult


class ShootResults(BaseModel):
    """shoot output."""

    command: Literal["shoot"] = "shoot"
    lambda1: float
    bracket: Tuple[float, float]
    anchor: Anchor
    lambda1_half_eps: Optional[float] = None
    eps_sensitivity: Optional[float] = None
    fem: Optional[EigenSummary] = None
    fem_rel_diff: Optional[float] = None
    asymptotics: AsymptoticsReport


class InequalityResults(BaseModel):
    """verify-inequalities output."""

    command: Literal["verify-inequalities"] = "verify-inequalities"
    reports: List[InequalityReport]
    embedding_C: Optional[float] = None
    violations: int


CommandResults = Annotated[
    Union[WeightsResults, EigenResults, AmpResults, ShootResults, InequalityResults],
    Field(discriminator="command"),
]


class Provenance(BaseModel):
    """Where a report came from. Only `started` and `duration` vary between reruns."""

    version: str
    seed: int
    started: str
    duration: float


class Report(BaseModel):
    """Contents of report.json."""

    schema_version: Literal["1.0"] = REPORT_SCHEMA_VERSION
    command: Command
    status: Literal["ok", "nonconverged"]
    config: ExperimentConfig
    results: CommandResults
    provenance: Provenance
    warnings: List[str] = []
    events: List[str] = []
    files: List[str] = []
