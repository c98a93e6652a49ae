"""Closed-form limits for the sample canonical correlation (SCC) matrix.

Everything here is a deterministic function of the aspect ratios
``c1 = p/n`` and ``c2 = q/n``: bulk edges, the BBP threshold, the limiting
density and its quantiles, the outlier map ``g_c`` and its inverse ``f_c``,
the limiting partial traces of the linearized resolvent, and the deviation
envelopes used to judge simulations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .errors import ConstraintViolation, DomainError

DEFAULT_TAU = 0.01
DEFAULT_EPS_TOL = 0.1


def check_ratios(c1: float, c2: float, tau: float = 0.0) -> None:
    """Raise ConstraintViolation unless ``tau <= c2 <= c1`` and ``c1 + c2 < 1 - tau``."""
    if not c2 >= tau:
        raise ConstraintViolation(f"need c2 >= {tau}, got c2 = {c2:.6g}")
    if c2 > c1:
        raise ConstraintViolation(f"need c2 <= c1, got c1 = {c1:.6g} < c2 = {c2:.6g}")
    if tau > 0 and c1 + c2 > 1 - tau:
        raise ConstraintViolation(
            f"need c1 + c2 <= 1 - tau = {1 - tau:.6g}, got c1 + c2 = {c1 + c2:.6g}"
        )
    if c1 + c2 >= 1:
        raise ConstraintViolation(f"need c1 + c2 < 1, got c1 + c2 = {c1 + c2:.6g}")


@dataclass(frozen=True)
class DimensionRatios:
    """Sample sizes ``(p, q, n)`` with ``c1 = p/n >= c2 = q/n`` and ``c1 + c2 < 1``."""

    p: int
    q: int
    n: int
    tau: float = field(default=DEFAULT_TAU, compare=False)

    def __post_init__(self):
        for name in ("p", "q", "n"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ConstraintViolation(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        check_ratios(self.c1, self.c2, self.tau)

    @property
    def c1(self) -> float:
        return self.p / self.n

    @property
    def c2(self) -> float:
        return self.q / self.n


RatiosLike = Union[DimensionRatios, Sequence[float]]


def _ratios(dims: RatiosLike) -> tuple[float, float]:
    if isinstance(dims, DimensionRatios):
        return dims.c1, dims.c2
    c1, c2 = (float(c) for c in dims)
    check_ratios(c1, c2)
    return c1, c2


def _n_of(dims: RatiosLike, n: int | None) -> int:
    if n is not None:
        return int(n)
    if isinstance(dims, DimensionRatios):
        return dims.n
    raise ConstraintViolation("sample size n is required when dims are bare ratios")


# ---------------------------------------------------------------------------
# edges, threshold, Tracy-Widom scale


def edge_locations(dims: RatiosLike) -> tuple[float, float]:
    """Return ``(lambda_minus, lambda_plus)``, the support of the limiting density."""
    c1, c2 = _ratios(dims)
    root_sum = math.sqrt(c1 * (1 - c2)) + math.sqrt(c2 * (1 - c1))
    lam_plus = root_sum**2
    # (sqrt(a) - sqrt(b))^2 rewritten without cancellation; a - b = c1 - c2
    lam_minus = (c1 - c2) ** 2 / lam_plus if lam_plus > 0 else 0.0
    return lam_minus, lam_plus


def bbp_threshold(dims: RatiosLike) -> float:
    c1, c2 = _ratios(dims)
    return math.sqrt(c1 * c2 / ((1 - c1) * (1 - c2)))


def tw_scale(dims: RatiosLike) -> float:
    """Scale ``c_TW`` matching the SCC edge to the GOE edge."""
    c1, c2 = _ratios(dims)
    _, lam_plus = edge_locations((c1, c2))
    num = lam_plus**2 * (1 - lam_plus) ** 2
    return (num / math.sqrt(c1 * c2 * (1 - c1) * (1 - c2))) ** (1 / 3)


# ---------------------------------------------------------------------------
# density and classical locations


def bulk_density(x, dims: RatiosLike):
    """Limiting eigenvalue density of the null SCC matrix; zero off ``[lambda_-, lambda_+]``."""
    c1, c2 = _ratios(dims)
    lam_minus, lam_plus = edge_locations((c1, c2))
    x = np.asarray(x, dtype=float)
    inside = (x > lam_minus) & (x < lam_plus)
    xs = np.where(inside, x, 0.5 * (lam_minus + lam_plus))
    val = np.sqrt((lam_plus - xs) * (xs - lam_minus)) / (2 * math.pi * c2 * xs * (1 - xs))
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def _angle_to_x(theta, lam_minus, lam_plus):
    # theta = 0 at lambda_plus, theta = pi at lambda_minus
    return lam_minus + 0.5 * (lam_plus - lam_minus) * (1 + np.cos(theta))


def _tail_integrand(theta, c2, lam_minus, lam_plus):
    # f(x) dx under x = lambda_- + W (1 + cos theta) / 2 removes both square-root edges
    w = lam_plus - lam_minus
    x = _angle_to_x(theta, lam_minus, lam_plus)
    return w * w * math.sin(theta) ** 2 / (8 * math.pi * c2 * x * (1 - x))


def _tail_mass_angle(theta: float, c2: float, lam_minus: float, lam_plus: float) -> float:
    val, _ = integrate.quad(
        _tail_integrand, 0.0, theta, args=(c2, lam_minus, lam_plus), epsabs=1e-14, epsrel=1e-13,
        limit=200,
    )
    return val


def upper_tail_mass(x: float, dims: RatiosLike) -> float:
    """``int_x^inf f(t) dt``."""
    c1, c2 = _ratios(dims)
    lam_minus, lam_plus = edge_locations((c1, c2))
    if x >= lam_plus:
        return 0.0
    if x <= lam_minus:
        return _tail_mass_angle(math.pi, c2, lam_minus, lam_plus)
    cos_t = 2 * (x - lam_minus) / (lam_plus - lam_minus) - 1
    return _tail_mass_angle(math.acos(min(1.0, max(-1.0, cos_t))), c2, lam_minus, lam_plus)


def total_mass(dims: RatiosLike) -> float:
    c1, c2 = _ratios(dims)
    lam_minus, lam_plus = edge_locations((c1, c2))
    return _tail_mass_angle(math.pi, c2, lam_minus, lam_plus)


def classical_location(j: int, dims: DimensionRatios, xtol: float = 1e-12) -> float:
    """Quantile ``gamma_j``: the point with upper-tail mass ``(j - 1)/q``."""
    q = dims.q
    if not 1 <= j <= q:
        raise ValueError(f"index j must lie in [1, {q}], got {j}")
    c1, c2 = dims.c1, dims.c2
    lam_minus, lam_plus = edge_locations(dims)
    if j == 1:
        return lam_plus
    target = (j - 1) / q
    theta = optimize.brentq(
        lambda t: _tail_mass_angle(t, c2, lam_minus, lam_plus) - target,
        0.0, math.pi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200,
    )
    return float(_angle_to_x(theta, lam_minus, lam_plus))


def classical_locations(dims: DimensionRatios) -> np.ndarray:
    """All ``gamma_1 >= ... >= gamma_q``."""
    return np.array([classical_location(j, dims) for j in range(1, dims.q + 1)])


# ---------------------------------------------------------------------------
# complex square roots and the outlier map


def _upper_sqrt(w):
    w = np.asarray(w, dtype=complex)
    # a real negative argument must land on +i, never -i
    w = np.where(w.imag == 0, w.real + 0j, w)
    return np.sqrt(w)


def edge_sqrt(z, dims: RatiosLike):
    """``sqrt((z - lambda_-)(z - lambda_+))`` as a product of upper-half-plane roots."""
    lam_minus, lam_plus = edge_locations(dims)
    return _upper_sqrt(np.asarray(z) - lam_minus) * _upper_sqrt(np.asarray(z) - lam_plus)


def _maybe_real(a):
    a = np.asarray(a)
    if np.iscomplexobj(a) and np.all(a.imag == 0):
        a = a.real
    return a[()] if a.ndim == 0 else a


def fc(z, dims: RatiosLike):
    """Map an outlier location back to the population squared correlation."""
    c1, c2 = _ratios(dims)
    sq = edge_sqrt(z, (c1, c2))
    val = (np.asarray(z) - (c1 + c2 - 2 * c1 * c2) + sq) / (2 * (1 - c1) * (1 - c2))
    return _maybe_real(val)


def gc(t, dims: RatiosLike, check: bool = True):
    """Outlier location ``theta = t (1 - c1 + c1/t)(1 - c2 + c2/t)`` for ``t > t_c``."""
    c1, c2 = _ratios(dims)
    t_arr = np.asarray(t, dtype=float)
    if check:
        t_c = bbp_threshold((c1, c2))
        if np.any(t_arr <= t_c) or np.any(t_arr > 1):
            raise DomainError(f"g_c needs t in (t_c, 1] = ({t_c:.6g}, 1]; no outlier otherwise")
    out = t_arr * (1 - c1 + c1 / t_arr) * (1 - c2 + c2 / t_arr)
    return out[()] if out.ndim == 0 else out


def gc_edge_gap(t, dims: RatiosLike):
    """``g_c(t) - lambda_+ = (1-c1)(1-c2)(t - t_c)^2 / t`` without cancellation."""
    c1, c2 = _ratios(dims)
    t = np.asarray(t, dtype=float)
    out = (1 - c1) * (1 - c2) * (t - bbp_threshold((c1, c2))) ** 2 / t
    return out[()] if out.ndim == 0 else out


def outlier_location(t: float, dims: RatiosLike) -> float:
    """``max(lambda_+, g_c(t))``: where the top sample eigenvalue for spike t settles."""
    if t <= bbp_threshold(dims):
        return edge_locations(dims)[1]
    return float(gc(t, dims))


# ---------------------------------------------------------------------------
# limiting partial traces


@dataclass(frozen=True)
class SpectralPoint:
    E: float
    eta: float
    kappa: float

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)


def spectral_point(z: complex, dims: RatiosLike) -> SpectralPoint:
    z = complex(z)
    if z.imag < 0:
        raise DomainError("spectral parameter must have nonnegative imaginary part")
    lam_minus, lam_plus = edge_locations(dims)
    kappa = min(abs(z.real - lam_minus), abs(z.real - lam_plus))
    return SpectralPoint(z.real, z.imag, kappa)


def _as_z(z):
    if isinstance(z, SpectralPoint):
        return z.z
    return z


@dataclass(frozen=True)
class AsymptoticTransforms:
    z: complex
    m1c: complex
    m2c: complex
    m3c: complex
    m4c: complex
    mc: complex
    h: complex


def sqrt_z(z):
    """Upper-half-plane branch of ``z^{1/2}``; the positive root on the positive axis."""
    return _upper_sqrt(z)


def m1c(z, dims: RatiosLike):
    # rationalized form of the closed expression: finite at z = 1 with no 0/0
    c1, c2 = _ratios(dims)
    z = np.asarray(_as_z(z), dtype=complex)
    sq = edge_sqrt(z, (c1, c2))
    return -c1 * (sq + z - c1 + c2) / ((1 - c1) * z * (sq + z - c1 - c2))


def m2c(z, dims: RatiosLike):
    c1, c2 = _ratios(dims)
    z = np.asarray(_as_z(z), dtype=complex)
    sq = edge_sqrt(z, (c1, c2))
    return -c2 * (sq + z + c1 - c2) / ((1 - c2) * z * (sq + z - c1 - c2))


def m3c(z, dims: RatiosLike):
    c1, c2 = _ratios(dims)
    z = np.asarray(_as_z(z), dtype=complex)
    return 0.5 * ((1 - 2 * c1) * z + c1 - c2 + edge_sqrt(z, (c1, c2)))


def m4c(z, dims: RatiosLike):
    c1, c2 = _ratios(dims)
    z = np.asarray(_as_z(z), dtype=complex)
    return 0.5 * ((1 - 2 * c2) * z + c2 - c1 + edge_sqrt(z, (c1, c2)))


def mc(z, dims: RatiosLike):
    """Stieltjes transform of the limiting density."""
    c1, c2 = _ratios(dims)
    return (1 - c2) / c2 * m2c(z, (c1, c2))


def h_function(z, dims: RatiosLike):
    c1, c2 = _ratios(dims)
    z = np.asarray(_as_z(z), dtype=complex)
    return 0.5 * sqrt_z(z) * (-z + 2 - c1 - c2 + edge_sqrt(z, (c1, c2)))


def m12_at_one(dims: RatiosLike) -> tuple[float, float]:
    """Finite limits of ``m1c`` and ``m2c`` at the removable point ``z = 1``."""
    c1, c2 = _ratios(dims)
    return -c1 / (1 - c1 - c2), -c2 / (1 - c1 - c2)


def asymptotic_transforms(z, dims: RatiosLike) -> AsymptoticTransforms:
    z = complex(_as_z(z))
    if z == 0:
        raise DomainError("asymptotic transforms are singular at z = 0")
    c1, c2 = _ratios(dims)
    vals = {
        "m1c": m1c(z, (c1, c2)),
        "m2c": m2c(z, (c1, c2)),
        "m3c": m3c(z, (c1, c2)),
        "m4c": m4c(z, (c1, c2)),
        "mc": mc(z, (c1, c2)),
        "h": h_function(z, (c1, c2)),
    }
    return AsymptoticTransforms(z=z, **{k: complex(v) for k, v in vals.items()})


# ---------------------------------------------------------------------------
# deterministic limit of the resolvent


@dataclass(frozen=True)
class PiLimit:
    """Scalars describing the deterministic limit of G(z), plus its 4r x 4r reduction."""

    d1: complex  # m1c / c1 on I_1
    d2: complex  # m2c / c2 on I_2
    d3: complex  # m3c on I_3
    d4: complex  # m4c on I_4
    h: complex   # off-diagonal I_3 x I_4 coupling
    reduced: np.ndarray

    def full(self, p: int, q: int, n: int) -> np.ndarray:
        """Dense ``(p+q+2n)`` square matrix; only for small sizes."""
        diag = np.concatenate([
            np.full(p, self.d1), np.full(q, self.d2), np.full(n, self.d3), np.full(n, self.d4)
        ])
        out = np.diag(diag).astype(complex)
        idx = np.arange(n)
        out[p + q + idx, p + q + n + idx] = self.h
        out[p + q + n + idx, p + q + idx] = self.h
        return out

    def bilinear(self, u: np.ndarray, v: np.ndarray, p: int, q: int, n: int):
        """``u^T Pi v`` for (possibly batched, column-stacked) real probes."""
        s1, s2, s3 = slice(0, p), slice(p, p + q), slice(p + q, p + q + n)
        s4 = slice(p + q + n, p + q + 2 * n)
        dot = lambda a, b: np.sum(a * b, axis=0)
        return (self.d1 * dot(u[s1], v[s1]) + self.d2 * dot(u[s2], v[s2])
                + self.d3 * dot(u[s3], v[s3]) + self.d4 * dot(u[s4], v[s4])
                + self.h * (dot(u[s3], v[s4]) + dot(u[s4], v[s3])))


def pi_limit(z, dims: RatiosLike, r: int = 0, alignment: np.ndarray | None = None) -> PiLimit:
    """Deterministic limit of G(z) and its rank-r form (ordered U^a, U^b, E^a, E^b)."""
    c1, c2 = _ratios(dims)
    tr = asymptotic_transforms(z, (c1, c2))
    if alignment is None:
        alignment = np.eye(r)
    alignment = np.asarray(alignment, dtype=float)
    if alignment.shape != (r, r):
        raise ValueError(f"alignment must be {r}x{r}, got {alignment.shape}")
    eye = np.eye(r)
    zero = np.zeros((r, r))
    reduced = np.block([
        [tr.m1c / c1 * eye, zero, zero, zero],
        [zero, tr.m2c / c2 * eye, zero, zero],
        [zero, zero, tr.m3c * eye, tr.h * alignment],
        [zero, zero, tr.h * alignment.T, tr.m4c * eye],
    ]).astype(complex)
    return PiLimit(tr.m1c / c1, tr.m2c / c2, tr.m3c, tr.m4c, tr.h, reduced)


def control_parameter(z, dims: RatiosLike, n: int | None = None) -> float:
    """``Psi(z) = sqrt(Im m_c / (n eta)) + 1/(n eta)``."""
    z = complex(_as_z(z))
    if z.imag <= 0:
        raise DomainError("control parameter needs eta > 0")
    n = _n_of(dims, n)
    n_eta = n * z.imag
    im_mc = max(float(np.imag(mc(z, dims))), 0.0)
    return math.sqrt(im_mc / n_eta) + 1 / n_eta


# ---------------------------------------------------------------------------
# support levels, classification and deviation envelopes


def support_levels(n: int, a: float | None = None, b: float | None = None) -> tuple[float, float]:
    """Bounded-support levels ``phi_n = n^{-1/2+2/a}``, ``psi_n = n^{-1/2+1/b}``.

    ``None`` (all moments finite) gives the floor ``n^{-1/2}``.
    """
    phi = n ** (-0.5 + (2 / a if a else 0.0))
    psi = n ** (-0.5 + (1 / b if b else 0.0))
    return phi, psi


def detection_margin(n: int, phi_n: float | None = None, psi_n: float | None = None) -> float:
    """Gap above ``t_c`` required to call a spike supercritical."""
    phi0, psi0 = support_levels(n)
    phi_n = phi0 if phi_n is None else phi_n
    psi_n = psi0 if psi_n is None else psi_n
    return n ** (-1 / 3) + phi_n + psi_n


@dataclass(frozen=True)
class SpikeEnvelope:
    index: int
    t: float
    delta: float
    is_outlier: bool
    location: float       # theta_i for outliers, lambda_+ otherwise
    lower_offset: float   # allowed deviation below location
    upper_offset: float   # allowed deviation above location

    def contains(self, value: float, eps_tol: float = 0.0, n: int = 1) -> bool:
        slack = n**eps_tol
        return (self.location + slack * self.lower_offset <= value
                <= self.location + slack * self.upper_offset)


def bound_envelopes(
    t_values: Sequence[float],
    dims: DimensionRatios,
    phi_n: float | None = None,
    psi_n: float | None = None,
    eps: float = DEFAULT_EPS_TOL,
    margin: float | None = None,
) -> list[SpikeEnvelope]:
    """Predicted deviation windows for each population spike."""
    n = dims.n
    phi0, psi0 = support_levels(n)
    phi_n = phi0 if phi_n is None else phi_n
    psi_n = psi0 if psi_n is None else psi_n
    if margin is None:
        margin = detection_margin(n, phi_n, psi_n)
    t_c = bbp_threshold(dims)
    lam_plus = edge_locations(dims)[1]
    out = []
    for i, t in enumerate(t_values, start=1):
        delta = abs(t - t_c)
        if t - t_c >= margin and t - t_c > 0:
            radius = (phi_n + psi_n) * delta + n**-0.5 * math.sqrt(delta)
            out.append(SpikeEnvelope(i, t, delta, True, float(gc(t, dims)), -radius, radius))
        else:
            upper = n**eps * (phi_n**2 + psi_n**2 + n ** (-2 / 3))
            out.append(SpikeEnvelope(i, t, delta, False, lam_plus, -(n ** (-2 / 3 + eps)), upper))
    return out


# ---------------------------------------------------------------------------
# bundle of derived constants


@dataclass(frozen=True)
class TheoryContext:
    dims: DimensionRatios
    lambda_minus: float
    lambda_plus: float
    t_threshold: float
    c_tw: float

    @classmethod
    def from_dims(cls, dims: DimensionRatios) -> "TheoryContext":
        lam_minus, lam_plus = edge_locations(dims)
        return cls(dims, lam_minus, lam_plus, bbp_threshold(dims), tw_scale(dims))

    @property
    def n(self) -> int:
        return self.dims.n

    def density(self, x):
        return bulk_density(x, self.dims)

    def fc(self, z):
        return fc(z, self.dims)

    def gc(self, t, check: bool = True):
        return gc(t, self.dims, check=check)

    def transforms(self, z) -> AsymptoticTransforms:
        return asymptotic_transforms(z, self.dims)

    def pi(self, z, r: int = 0, alignment=None) -> PiLimit:
        return pi_limit(z, self.dims, r, alignment)

    def psi(self, z) -> float:
        return control_parameter(z, self.dims)

    def kappa(self, E: float) -> float:
        return min(abs(E - self.lambda_minus), abs(E - self.lambda_plus))

    @cached_property
    def gammas(self) -> np.ndarray:
        return classical_locations(self.dims)

    def as_dict(self) -> dict:
        return {
            "p": self.dims.p, "q": self.dims.q, "n": self.dims.n,
            "c1": self.dims.c1, "c2": self.dims.c2,
            "lambda_minus": self.lambda_minus, "lambda_plus": self.lambda_plus,
            "t_c": self.t_threshold, "c_tw": self.c_tw,
        }
