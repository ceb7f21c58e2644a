"""Attack configuration and per-sample outcome records."""

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

GRADIENT_ENGINES = ("full", "tmo", "bottom", "implicit", "signal-direct")
CONSTRAINT_ENGINES = ("linf-pgd", "l0-binary", "icop-projection")


@dataclass
class AttackSpec:
    """How gradients are obtained and how the perturbation is kept feasible.

    Exactly one of ``epsilon`` (sup-norm radius, signal units) and ``budget``
    (bit/response budget B) must be set, matching the constraint engine.
    """

    gradient_engine: str = "full"
    constraint_engine: str = "linf-pgd"
    epsilon: Optional[float] = None
    budget: Optional[float] = None
    q: str = "inf"                      # norm tag: "inf" | "0" | "1" | "2"
    pgd_iters: int = 100
    tau: int = 5
    step_size: Optional[float] = None   # default: 2.5*eps/pgd_iters
    icop_eta: Optional[float] = None    # None -> damped Newton-style steps
    icop_tol: float = 1e-6
    icop_max_proj: int = 100
    icop_exact_penalty: bool = False    # |resp - B| instead of hinge
    lbfgs_max_iters: int = 20
    lbfgs_history: int = 10
    cg_iters: int = 50
    cg_tol: float = 1e-10
    cg_damping: float = 1e-4
    mask_lr: float = 0.01               # dual-mask update rate (bit attacks)
    residual_warn: float = 1e-3         # stationarity threshold for implicit
    seed: int = 0

    def __post_init__(self):
        if self.gradient_engine not in GRADIENT_ENGINES:
            raise ValueError(
                f"unknown gradient engine '{self.gradient_engine}'; "
                f"valid: {', '.join(GRADIENT_ENGINES)}")
        if self.constraint_engine not in CONSTRAINT_ENGINES:
            raise ValueError(
                f"unknown constraint engine '{self.constraint_engine}'; "
                f"valid: {', '.join(CONSTRAINT_ENGINES)}")
        has_eps = self.epsilon is not None
        has_b = self.budget is not None
        if has_eps == has_b:
            raise ValueError("exactly one of epsilon/budget must be set")
        if self.constraint_engine == "linf-pgd" and not has_eps:
            raise ValueError("linf-pgd uses epsilon, not budget")
        if self.constraint_engine in ("l0-binary", "icop-projection") and not has_b:
            raise ValueError(f"{self.constraint_engine} uses budget, not epsilon")
        if has_eps and self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if has_b and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.pgd_iters < 1:
            raise ValueError("pgd_iters must be >= 1")

    @property
    def bound(self) -> float:
        return self.epsilon if self.epsilon is not None else self.budget

    def alpha(self) -> float:
        """PGD step size; standard 2.5*eps/iters unless pinned."""
        if self.step_size is not None:
            return self.step_size
        return 2.5 * float(self.bound) / self.pgd_iters

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        return cls(**d)


@dataclass
class AttackResult:
    """Outcome of attacking one sample."""

    perturbation: np.ndarray
    success: bool
    loss_trace: list
    clean_logits: np.ndarray
    adv_logits: np.ndarray
    clean_pred: int
    adv_pred: int
    iterations: int
    wall_time: float
    peak_nodes: int
    warnings: list = field(default_factory=list)

    @property
    def clean_loss(self) -> float:
        return float(self.loss_trace[0]) if self.loss_trace else float("nan")

    @property
    def final_loss(self) -> float:
        return float(self.loss_trace[-1]) if self.loss_trace else float("nan")


@dataclass
class DualMask:
    """Binary mask plus its real-valued companion for bit-flip optimization."""

    phi: np.ndarray      # {0,1}
    phi_c: np.ndarray    # real scores; gradients land here

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.phi_c = np.asarray(self.phi_c, dtype=np.float64)
        if self.phi.shape != self.phi_c.shape:
            raise ValueError("mask shapes differ")
        vals = np.unique(self.phi)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError("phi must be binary")

    def popcount(self) -> int:
        return int(self.phi.sum())
