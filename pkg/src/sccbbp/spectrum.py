"""Sample canonical correlation spectra and the BBP diagnostics built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg, stats

from .errors import DegenerateInputError
from .theory import DimensionRatios, TheoryContext, fc

PROVENANCES = ("perturbed", "null", "one-side")
RANK_RTOL = 1e-10
CLAMP_TOL = 1e-12


@dataclass
class Spectrum:
    """Descending squared sample CCCs (``min(p, q)`` values in [0, 1])."""

    values: np.ndarray
    dims: DimensionRatios
    provenance: str = "perturbed"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def padded(self, i: int) -> float:
        """1-based access with the convention ``lambda_i = 1`` for i < 1, ``0`` past the end."""
        if i < 1:
            return 1.0
        if i > len(self.values):
            return 0.0
        return float(self.values[i - 1])


def _row_basis(mat: np.ndarray, name: str) -> np.ndarray:
    # orthonormal basis of the row space via thin QR of the transpose
    q_fac, r_fac = np.linalg.qr(mat.T)
    s = np.linalg.svd(r_fac, compute_uv=False)
    if s.size and (s[-1] <= RANK_RTOL * s[0] or not np.isfinite(s).all()):
        raise DegenerateInputError(
            f"{name} is numerically row-rank deficient (condition number {s[0] / max(s[-1], 1e-300):.3g})"
        )
    return q_fac


def scc_values(Xd: np.ndarray, Yd: np.ndarray) -> np.ndarray:
    """Squared canonical correlations between the row spaces of ``Xd`` and ``Yd``."""
    Xd = np.asarray(Xd, dtype=float)
    Yd = np.asarray(Yd, dtype=float)
    if Xd.shape[1] != Yd.shape[1]:
        raise ValueError(f"sample counts differ: {Xd.shape[1]} vs {Yd.shape[1]}")
    qx = _row_basis(Xd, "X")
    qy = _row_basis(Yd, "Y")
    sv = np.linalg.svd(qx.T @ qy, compute_uv=False)
    vals = sv**2
    vals = np.where((vals > 1) & (vals <= 1 + CLAMP_TOL), 1.0, vals)
    return np.sort(vals)[::-1]


def scc_spectrum(Xd: np.ndarray, Yd: np.ndarray, provenance: str = "perturbed") -> Spectrum:
    Xd = np.asarray(Xd)
    Yd = np.asarray(Yd)
    p, q = Xd.shape[0], Yd.shape[0]
    dims = DimensionRatios(max(p, q), min(p, q), Xd.shape[1], tau=0.0)
    return Spectrum(scc_values(Xd, Yd), dims, provenance)


def scc_dense(Xd: np.ndarray, Yd: np.ndarray) -> np.ndarray:
    """Textbook ``S_xx^{-1/2} S_xy S_yy^{-1} S_yx S_xx^{-1/2}`` eigenvalues (small inputs only)."""
    sxx, syy, sxy = Xd @ Xd.T, Yd @ Yd.T, Xd @ Yd.T
    w, v = np.linalg.eigh(sxx)
    sxx_isqrt = (v / np.sqrt(w)) @ v.T
    mat = sxx_isqrt @ sxy @ np.linalg.solve(syy, sxy.T) @ sxx_isqrt
    vals = np.linalg.eigvalsh(0.5 * (mat + mat.T))[::-1]
    return vals[: min(Xd.shape[0], Yd.shape[0])]


def bundle_spectra(bundle) -> dict[str, Spectrum]:
    """Perturbed, null and one-side spectra of one generated bundle (whitened coordinates)."""
    return {
        "perturbed": scc_spectrum(bundle.X_signal, bundle.Y_signal, "perturbed"),
        "null": scc_spectrum(bundle.X, bundle.Y, "null"),
        "one-side": scc_spectrum(bundle.X, bundle.Y_signal, "one-side"),
    }


# ---------------------------------------------------------------------------
# interlacing


@dataclass(frozen=True)
class InterlacingResult:
    passed: bool
    worst_index: int | None
    worst_violation: float
    shift: int


def interlacing_check(perturbed: Spectrum, null: Spectrum, r: int, shift: int | None = None,
                      slack: float = 1e-10) -> InterlacingResult:
    """Check ``lambda_{i+k} <= tilde-lambda_i <= lambda_{i-k}`` with ``k = 2r`` by default.

    Use ``shift = r`` when only one side of the data carries the signal.
    """
    if len(perturbed) != len(null) or perturbed.dims.n != null.dims.n:
        raise ValueError("spectra come from different dimensions")
    k = 2 * r if shift is None else shift
    worst, worst_i = 0.0, None
    for i in range(1, len(perturbed) + 1):
        v = perturbed.padded(i)
        lo, hi = null.padded(i + k), null.padded(i - k)
        excess = max(lo - v, v - hi, 0.0)
        if excess > worst:
            worst, worst_i = excess, i
    return InterlacingResult(worst <= slack, worst_i if worst > slack else None, worst, k)


# ---------------------------------------------------------------------------
# detection and estimation


DEFAULT_WINDOW_CONSTANT = 1.0
DEFAULT_WINDOW_EPS = 0.1


@dataclass(frozen=True)
class SpikeEstimate:
    r_hat: int
    t_hat: tuple[float, ...]
    edge_gap: float
    threshold: float

    def to_dict(self) -> dict:
        return {"r_hat": self.r_hat, "t_hat": list(self.t_hat), "edge_gap": self.edge_gap,
                "threshold": self.threshold}


def detection_threshold(context: TheoryContext, window_constant: float = DEFAULT_WINDOW_CONSTANT,
                        epsilon: float = DEFAULT_WINDOW_EPS) -> float:
    n = context.n
    return context.lambda_plus + window_constant * n ** (-2 / 3 + epsilon)


def detect_spikes(spectrum: Spectrum, context: TheoryContext,
                  window_constant: float = DEFAULT_WINDOW_CONSTANT,
                  epsilon: float = DEFAULT_WINDOW_EPS,
                  max_rank: int | None = None) -> SpikeEstimate:
    """Count eigenvalues above the edge window and invert each through ``f_c``."""
    cut = detection_threshold(context, window_constant, epsilon)
    vals = spectrum.values
    r_hat = int(np.sum(vals > cut))
    if max_rank is not None:
        r_hat = min(r_hat, max_rank)
    t_hat = tuple(float(min(fc(v, context.dims), 1.0)) for v in vals[:r_hat])
    gap = spectrum.padded(r_hat + 1) - context.lambda_plus
    return SpikeEstimate(r_hat, t_hat, float(gap), cut)


# ---------------------------------------------------------------------------
# rigidity and sticking


def _bulk_count(q: int, delta: float) -> int:
    if not 0 < delta < 1:
        raise ValueError("bulk fraction delta must lie in (0, 1)")
    return int(math.floor((1 - delta) * q))


def rigidity_diagnostic(null: Spectrum, context: TheoryContext, delta: float = 0.1) -> float:
    """``max_{i <= (1-delta) q} i^{1/3} n^{2/3} |lambda_i - gamma_i|``."""
    k = _bulk_count(len(null), delta)
    n = context.n
    idx = np.arange(1, k + 1)
    gammas = context.gammas[:k]
    return float(np.max(idx ** (1 / 3) * n ** (2 / 3) * np.abs(null.values[:k] - gammas)))


def sticking_diagnostic(perturbed: Spectrum, reference: Spectrum, r_plus: int, alpha_plus: float,
                        delta: float = 0.1) -> float:
    """``max_{i <= (1-delta) q} n alpha_+ |tilde-lambda_{i+r_+} - lambda_i|``."""
    q = len(reference)
    if r_plus < 0 or r_plus >= len(perturbed):
        raise ValueError(f"r_plus = {r_plus} does not fit a spectrum of length {len(perturbed)}")
    k = min(_bulk_count(q, delta), len(perturbed) - r_plus)
    n = reference.dims.n
    diff = np.abs(perturbed.values[r_plus: r_plus + k] - reference.values[:k])
    return float(n * alpha_plus * diff.max()) if k else 0.0


# ---------------------------------------------------------------------------
# Tracy-Widom edge


def goe_edge_samples(matrix_size: int, count: int, seed: int) -> np.ndarray:
    """Rescaled top eigenvalues ``m^{2/3}(lambda_1 - 2)`` of independent GOE matrices."""
    if matrix_size < 50:
        raise ValueError("GOE reference needs matrix_size >= 50")
    m = matrix_size
    out = np.empty(count)
    for k in range(count):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(k,))))
        g = rng.standard_normal((m, m))
        h = (g + g.T) / math.sqrt(2 * m)  # off-diagonal variance 1/m, diagonal 2/m
        top = linalg.eigvalsh(h, subset_by_index=[m - 1, m - 1], check_finite=False)[0]
        out[k] = m ** (2 / 3) * (top - 2.0)
    return out


def rescale_edge(values: Sequence[float], context: TheoryContext) -> np.ndarray:
    """``n^{2/3}(lambda - lambda_+)/c_TW``."""
    v = np.asarray(values, dtype=float)
    return context.n ** (2 / 3) * (v - context.lambda_plus) / context.c_tw


def ks_distance(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two nonempty samples")
    return float(stats.ks_2samp(a, b).statistic)


def tw_edge_comparison(scc_edge_values: Sequence[float], goe_samples: Sequence[float],
                       context: TheoryContext) -> float:
    """KS distance between rescaled SCC edge eigenvalues and the GOE edge reference."""
    return ks_distance(rescale_edge(scc_edge_values, context), goe_samples)
