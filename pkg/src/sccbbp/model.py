"""Synthetic data for the signal-plus-noise CCA model.

``X_tilde = A_tilde Z + C1^{1/2} X`` and ``Y_tilde = B_tilde Z + C2^{1/2} Y`` where
X, Y, Z have independent entries of mean zero and variance ``1/n``.  Loadings are
stored in whitened coordinates (``A = C1^{-1/2} A_tilde``) so that the population
squared canonical correlations depend only on the singular values and on the
alignment of the right singular vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConstraintViolation, DegenerateInputError
from .theory import (
    DEFAULT_TAU,
    DimensionRatios,
    TheoryContext,
    detection_margin,
    support_levels,
)

ROLES = {"x": 0, "y": 1, "z": 2, "loadings": 3, "alignment": 4}
_FIXED_STREAM = 2**31  # replicate slot reserved for replicate-independent draws

DISTRIBUTION_KINDS = ("gaussian", "rademacher", "uniform", "student_t")


def role_rng(seed: int, replicate: int | None, role: str) -> np.random.Generator:
    """Counter-based generator for one (seed, replicate, role) triple."""
    slot = _FIXED_STREAM if replicate is None else int(replicate)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(slot, ROLES[role]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EntryDistribution:
    """Law of the standardized entries ``sqrt(n) x_ij`` (mean 0, variance 1)."""

    kind: str = "gaussian"
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise ConstraintViolation(f"unknown distribution {self.kind!r}; pick one of {DISTRIBUTION_KINDS}")
        if self.kind == "student_t" and (self.nu is None or self.nu <= 2):
            raise ConstraintViolation("student_t needs a tail index nu > 2 for unit variance")

    @property
    def moment_order(self) -> float:
        """Supremum of the finite absolute moments (infinite for light tails)."""
        return float(self.nu) if self.kind == "student_t" else math.inf

    @property
    def violates_moment_condition(self) -> bool:
        # finite moment of order a > 4 is required for the noise entries
        return self.moment_order <= 4

    def standardized(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "rademacher":
            return rng.choice(np.array([-1.0, 1.0]), size=shape)
        if self.kind == "uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=shape)
        nu = float(self.nu)
        return rng.standard_t(nu, size=shape) * math.sqrt((nu - 2) / nu)

    def sample(self, rng: np.random.Generator, shape, n: int) -> np.ndarray:
        return self.standardized(rng, shape) / math.sqrt(n)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "nu": self.nu}

    @classmethod
    def from_dict(cls, d: Mapping | str) -> "EntryDistribution":
        if isinstance(d, str):
            return cls(d)
        return cls(d.get("kind", "gaussian"), d.get("nu"))


# ---------------------------------------------------------------------------
# spikes


@dataclass(frozen=True)
class SpikeModel:
    r: int
    a_values: np.ndarray
    b_values: np.ndarray
    alignment: np.ndarray
    t_values: np.ndarray
    delta_values: np.ndarray
    alpha_plus: float
    r_plus: int
    t_threshold: float
    margin: float

    @property
    def outlier_t(self) -> np.ndarray:
        return self.t_values[: self.r_plus]

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "a_values": self.a_values.tolist(),
            "b_values": self.b_values.tolist(),
            "alignment": self.alignment.tolist(),
            "t_values": self.t_values.tolist(),
            "delta_values": self.delta_values.tolist(),
            "alpha_plus": self.alpha_plus,
            "r_plus": self.r_plus,
        }


def population_correlations(a_values, b_values, alignment) -> np.ndarray:
    """Squared population CCCs, descending, from loadings and right-vector alignment."""
    a = np.asarray(a_values, dtype=float)
    b = np.asarray(b_values, dtype=float)
    sa = np.diag(a / np.sqrt(1 + a**2))
    sb2 = np.diag(b**2 / (1 + b**2))
    mat = sa @ alignment @ sb2 @ alignment.T @ sa
    vals = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    return np.clip(vals[::-1], 0.0, None)


def _random_orthogonal(r: int, seed: int) -> np.ndarray:
    rng = role_rng(seed, None, "alignment")
    if r == 1:
        return np.array([[1.0]])
    return stats.ortho_group.rvs(r, random_state=rng)


def resolve_alignment(r: int, spec, seed: int | None = None) -> np.ndarray:
    """``"identity"``, ``("random", seed)`` / ``"random"`` or an explicit orthogonal matrix."""
    if isinstance(spec, str) and spec == "identity":
        return np.eye(r)
    if isinstance(spec, str) and spec == "random":
        return _random_orthogonal(r, 0 if seed is None else seed)
    if isinstance(spec, (tuple, list)) and len(spec) == 2 and spec[0] == "random":
        return _random_orthogonal(r, int(spec[1]))
    mat = np.asarray(spec, dtype=float)
    if mat.shape != (r, r):
        raise ConstraintViolation(f"alignment must be {r}x{r}, got shape {mat.shape}")
    if not np.allclose(mat @ mat.T, np.eye(r), atol=1e-12, rtol=0):
        raise ConstraintViolation("alignment matrix must be orthogonal (M M^T = I)")
    return mat


def make_spike_model(
    r: int,
    a_values: Sequence[float],
    b_values: Sequence[float],
    alignment_spec="identity",
    dims: DimensionRatios | None = None,
    *,
    context: TheoryContext | None = None,
    margin: float | None = None,
    tau: float = DEFAULT_TAU,
) -> SpikeModel:
    a = np.asarray(a_values, dtype=float).reshape(-1)
    b = np.asarray(b_values, dtype=float).reshape(-1)
    if len(a) != r or len(b) != r:
        raise ConstraintViolation(f"expected {r} singular values per loading, got {len(a)} and {len(b)}")
    if tau > 0 and r > 1 / tau:
        raise ConstraintViolation(f"rank r = {r} exceeds 1/tau = {1 / tau:g}")
    if np.any(a < 0) or np.any(b < 0):
        raise ConstraintViolation("singular values must be nonnegative")
    if np.any(np.diff(a) > 0) or np.any(np.diff(b) > 0):
        raise ConstraintViolation("singular values must be in descending order")
    alignment = resolve_alignment(r, alignment_spec)
    t_values = population_correlations(a, b, alignment) if r else np.zeros(0)

    if context is None and dims is not None:
        context = TheoryContext.from_dims(dims)
    if context is not None:
        t_c = context.t_threshold
        if margin is None:
            margin = detection_margin(context.n)
    else:
        t_c, margin = math.nan, math.nan
    delta = np.abs(t_values - t_c)
    r_plus = int(np.sum((t_values - t_c >= margin) & (t_values > t_c))) if context else 0
    alpha_plus = float(delta.min()) if r else math.inf
    return SpikeModel(r, a, b, alignment, t_values, delta, alpha_plus, r_plus, t_c, margin)


def loadings_for_targets(t_targets: Sequence[float]) -> np.ndarray:
    """Equal singular values ``a = b`` giving squared CCCs ``t`` under identity alignment."""
    t = np.asarray(t_targets, dtype=float)
    if np.any(t < 0) or np.any(t >= 1):
        raise ConstraintViolation("target squared correlations must lie in [0, 1)")
    s = np.sqrt(t)
    return np.sqrt(s / (1 - s))


def spike_model_for_targets(t_targets: Sequence[float], dims: DimensionRatios, **kw) -> SpikeModel:
    t = np.sort(np.asarray(t_targets, dtype=float))[::-1]
    ab = loadings_for_targets(t)
    return make_spike_model(len(t), ab, ab, "identity", dims, **kw)



# ---------------------------------------------------------------------------
# data generation


@dataclass
class DatasetBundle:
    X_tilde: np.ndarray
    Y_tilde: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    A: np.ndarray            # whitened loadings, p x r
    B: np.ndarray
    u_a: np.ndarray          # left singular vectors, p x r
    u_b: np.ndarray
    v_a: np.ndarray          # right singular vectors, r x r
    v_b: np.ndarray
    a_values: np.ndarray
    b_values: np.ndarray
    C1: np.ndarray | None = None
    C2: np.ndarray | None = None
    seed: int = 0
    replicate: int = 0
    spike_model: SpikeModel | None = field(default=None, repr=False)

    @property
    def dims(self) -> DimensionRatios:
        return DimensionRatios(self.X.shape[0], self.Y.shape[0], self.X.shape[1])

    @property
    def r(self) -> int:
        return self.Z.shape[0]

    @property
    def X_signal(self) -> np.ndarray:
        """Whitened perturbed matrix ``X + A Z``."""
        return self.X + self.A @ self.Z

    @property
    def Y_signal(self) -> np.ndarray:
        return self.Y + self.B @ self.Z


def _psd_sqrt(c: np.ndarray, name: str, inverse: bool = False) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ConstraintViolation(f"{name} must be square")
    if not np.allclose(c, c.T, atol=1e-12 * max(1.0, np.abs(c).max())):
        raise ConstraintViolation(f"{name} must be symmetric")
    w, v = np.linalg.eigh(c)
    if w.min() <= 0:
        err = DegenerateInputError if inverse else ConstraintViolation
        raise err(f"{name} is not positive definite (smallest eigenvalue {w.min():.3g})")
    if inverse and w.min() < 1e-12 * w.max():
        raise DegenerateInputError(f"{name} is numerically singular")
    power = -0.5 if inverse else 0.5
    return (v * w**power) @ v.T


def diagonal_covariance(dim: int, low: float, high: float, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), dim])))
    return np.diag(rng.uniform(low, high, size=dim))


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if cols == 0:
        return np.zeros((rows, 0))
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def _distributions(distributions) -> dict[str, EntryDistribution]:
    if distributions is None:
        distributions = EntryDistribution()
    if isinstance(distributions, (EntryDistribution, str)):
        d = EntryDistribution.from_dict(distributions) if isinstance(distributions, str) else distributions
        return {"x": d, "y": d, "z": d}
    out = {}
    for role in ("x", "y", "z"):
        d = distributions.get(role, EntryDistribution())
        out[role] = EntryDistribution.from_dict(d) if not isinstance(d, EntryDistribution) else d
    return out


def generate_dataset(
    dims: DimensionRatios,
    spike_model: SpikeModel | None = None,
    distributions=None,
    covariance: tuple[np.ndarray, np.ndarray] | None = None,
    seed: int = 0,
    replicate: int = 0,
) -> DatasetBundle:
    """Draw one replicate; identical ``(seed, replicate)`` give bit-identical output."""
    p, q, n = dims.p, dims.q, dims.n
    laws = _distributions(distributions)
    r = 0 if spike_model is None else spike_model.r

    load_rng = role_rng(seed, None, "loadings")
    u_a = _orthonormal(load_rng, p, r)
    u_b = _orthonormal(load_rng, q, r)
    v_a = _orthonormal(load_rng, r, r)
    if r:
        a_vals, b_vals = spike_model.a_values, spike_model.b_values
        v_b = v_a @ spike_model.alignment
    else:
        a_vals = b_vals = np.zeros(0)
        v_b = np.zeros((0, 0))
    A = (u_a * a_vals) @ v_a.T if r else np.zeros((p, 0))
    B = (u_b * b_vals) @ v_b.T if r else np.zeros((q, 0))

    X = laws["x"].sample(role_rng(seed, replicate, "x"), (p, n), n)
    Y = laws["y"].sample(role_rng(seed, replicate, "y"), (q, n), n)
    Z = laws["z"].sample(role_rng(seed, replicate, "z"), (r, n), n)

    if covariance is None:
        C1 = C2 = None
        X_tilde = X + A @ Z if r else X.copy()
        Y_tilde = Y + B @ Z if r else Y.copy()
    else:
        C1, C2 = (np.asarray(c, dtype=float) for c in covariance)
        if C1.shape != (p, p) or C2.shape != (q, q):
            raise ConstraintViolation("covariance shapes do not match (p, q)")
        r1, r2 = _psd_sqrt(C1, "C1"), _psd_sqrt(C2, "C2")
        X_tilde = r1 @ (X + A @ Z)
        Y_tilde = r2 @ (Y + B @ Z)
    return DatasetBundle(
        X_tilde, Y_tilde, X, Y, Z, A, B, u_a, u_b, v_a, v_b, a_vals, b_vals,
        C1, C2, int(seed), int(replicate), spike_model,
    )


def whiten(bundle: DatasetBundle) -> DatasetBundle:
    """Map ``(X_tilde, Y_tilde)`` to ``(C1^{-1/2} X_tilde, C2^{-1/2} Y_tilde)``."""
    if bundle.C1 is None and bundle.C2 is None:
        return bundle
    p, q = bundle.X_tilde.shape[0], bundle.Y_tilde.shape[0]
    C1 = np.eye(p) if bundle.C1 is None else bundle.C1
    C2 = np.eye(q) if bundle.C2 is None else bundle.C2
    return replace(
        bundle,
        X_tilde=_psd_sqrt(C1, "C1", inverse=True) @ bundle.X_tilde,
        Y_tilde=_psd_sqrt(C2, "C2", inverse=True) @ bundle.Y_tilde,
        C1=None,
        C2=None,
    )


# ---------------------------------------------------------------------------
# preprocessing and diagnostics


@dataclass(frozen=True)
class TruncationReport:
    level: float
    count: int
    fraction: float
    moment_order: float
    moment_condition_ok: bool


def truncate_entries(
    matrix: np.ndarray, moment_order: float, epsilon: float, kind: str = "noise"
) -> tuple[np.ndarray, TruncationReport]:
    """Zero entries above ``phi_n n^eps`` (noise) or ``psi_n n^eps`` (signal ``Z``).

    ``moment_order`` is the assumed order of finite moments of ``sqrt(n) x_ij``.
    The report flags orders that do not meet the model's moment prerequisite
    (> 4 for noise, > 2 for the signal matrix).
    """
    m = np.asarray(matrix, dtype=float)
    n = m.shape[1]
    if kind == "noise":
        phi, _ = support_levels(n, a=moment_order)
        level, needed = phi * n**epsilon, 4
    elif kind == "signal":
        _, psi = support_levels(n, b=moment_order)
        level, needed = psi * n**epsilon, 2
    else:
        raise ValueError(f"kind must be 'noise' or 'signal', got {kind!r}")
    mask = np.abs(m) > level
    count = int(mask.sum())
    out = np.where(mask, 0.0, m)
    report = TruncationReport(level, count, count / m.size if m.size else 0.0,
                              float(moment_order), moment_order > needed)
    return out, report


def approximate_isometry_check(Z: np.ndarray) -> float:
    """Operator-norm distance ``||Z Z^T - I_r||``."""
    Z = np.asarray(Z, dtype=float)
    r = Z.shape[0]
    if r == 0:
        return 0.0
    return float(np.linalg.norm(Z @ Z.T - np.eye(r), 2))
