"""Linearized SCC matrix H(z), its resolvent, and exact finite-n checks.

H(z) is the ``(p+q+2n)``-square matrix whose invertibility at real ``z = lambda``
decides whether lambda is an SCC eigenvalue.  This module builds it densely,
computes G = H^{-1} two ways (direct inversion and Schur complement), checks the
algebraic partial-trace identities, measures the anisotropic local-law error
against the deterministic limit, and evaluates the low-rank master determinant
whose zeros are the perturbed eigenvalues.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import optimize

from .errors import DomainError, PoleError
from .spectrum import scc_values
from .theory import (
    DimensionRatios,
    TheoryContext,
    edge_locations,
    fc,
    pi_limit,
    sqrt_z,
    support_levels,
    mc,
)

MAX_LINEARIZED_SIZE = 3000
POLE_TOL = 1e-12


def _blocks(p: int, q: int, n: int) -> dict[int, slice]:
    return {
        1: slice(0, p),
        2: slice(p, p + q),
        3: slice(p + q, p + q + n),
        4: slice(p + q + n, p + q + 2 * n),
    }


def _check_z(z) -> complex:
    z = complex(z)
    if z == 0 or z == 1:
        raise DomainError(f"H(z) is not defined at z = {z.real:g}; the 2n-block is singular")
    if z.imag < 0:
        raise DomainError("spectral parameter must lie in the closed upper half plane")
    return z


def _k_block(z: complex, n: int) -> np.ndarray:
    """``[[z, z^{1/2}], [z^{1/2}, z]] (x) I_n``."""
    s = complex(sqrt_z(z))
    eye = np.eye(n)
    return np.block([[z * eye, s * eye], [s * eye, z * eye]])


def _maybe_real_matrix(a: np.ndarray, z: complex) -> np.ndarray:
    if z.imag == 0 and z.real > 0:
        return a.real.copy()
    return a


@dataclass
class LinearizedSystem:
    H: np.ndarray
    z: complex
    X: np.ndarray
    Y: np.ndarray

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.Y.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def index_blocks(self) -> dict[int, slice]:
        return _blocks(self.p, self.q, self.n)


def build_linearized(Xd: np.ndarray, Yd: np.ndarray, z) -> LinearizedSystem:
    z = _check_z(z)
    X = np.asarray(Xd, dtype=float)
    Y = np.asarray(Yd, dtype=float)
    p, q, n = X.shape[0], Y.shape[0], X.shape[1]
    if Y.shape[1] != n:
        raise ValueError("X and Y need the same number of samples")
    size = p + q + 2 * n
    if size > MAX_LINEARIZED_SIZE:
        raise ValueError(f"linearized size {size} exceeds the dense cap {MAX_LINEARIZED_SIZE}")
    s = complex(sqrt_z(z))
    eye = np.eye(n)
    lower = np.block([[z * eye, -s * eye], [-s * eye, z * eye]]) / (z * z - z)
    H = np.zeros((size, size), dtype=complex)
    b = _blocks(p, q, n)
    H[b[1], b[3]] = X
    H[b[2], b[4]] = Y
    H[b[3], b[1]] = X.T
    H[b[4], b[2]] = Y.T
    H[p + q:, p + q:] = lower
    return LinearizedSystem(_maybe_real_matrix(H, z), z, X, Y)


# ---------------------------------------------------------------------------
# sample-covariance pieces


@dataclass
class SampleBlocks:
    sxx: np.ndarray
    syy: np.ndarray
    sxy: np.ndarray
    sxx_isqrt: np.ndarray
    syy_isqrt: np.ndarray
    hcal: np.ndarray  # S_xx^{-1/2} S_xy S_yy^{-1/2}


def _isqrt(s: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(s)
    return (v / np.sqrt(w)) @ v.T


def sample_blocks(X: np.ndarray, Y: np.ndarray) -> SampleBlocks:
    sxx, syy, sxy = X @ X.T, Y @ Y.T, X @ Y.T
    sxx_i, syy_i = _isqrt(sxx), _isqrt(syy)
    return SampleBlocks(sxx, syy, sxy, sxx_i, syy_i, sxx_i @ sxy @ syy_i)


def _nearest_null(X: np.ndarray, Y: np.ndarray, z: complex) -> float:
    vals = scc_values(X, Y)
    return float(vals[np.argmin(np.abs(vals - z))])


def _check_pole(X: np.ndarray, Y: np.ndarray, z: complex, null_values=None) -> None:
    if z.imag != 0:
        return
    vals = scc_values(X, Y) if null_values is None else np.asarray(null_values)
    k = int(np.argmin(np.abs(vals - z.real)))
    if abs(vals[k] - z.real) <= POLE_TOL * max(1.0, abs(z)):
        raise PoleError(f"z = {z.real:.12g} collides with a null SCC eigenvalue", float(vals[k]))


# ---------------------------------------------------------------------------
# resolvent


@dataclass
class ResolventSnapshot:
    G: np.ndarray
    z: complex
    p: int
    q: int
    n: int
    m1: complex
    m2: complex
    m3: complex
    m4: complex
    m: complex
    blocks: SampleBlocks = field(repr=False)
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    H: np.ndarray | None = field(default=None, repr=False)

    @property
    def dims(self) -> DimensionRatios:
        return DimensionRatios(self.p, self.q, self.n, tau=0.0)

    def block(self, a: int, b: int) -> np.ndarray:
        s = _blocks(self.p, self.q, self.n)
        return self.G[s[a], s[b]]

    @property
    def GL(self) -> np.ndarray:
        k = self.p + self.q
        return self.G[:k, :k]

    @property
    def GR(self) -> np.ndarray:
        k = self.p + self.q
        return self.G[k:, k:]

    @property
    def GLR(self) -> np.ndarray:
        k = self.p + self.q
        return self.G[:k, k:]


def _partial_traces(G: np.ndarray, p: int, q: int, n: int) -> tuple[complex, ...]:
    d = np.diagonal(G)
    b = _blocks(p, q, n)
    return tuple(complex(d[b[a]].sum() / n) for a in (1, 2, 3, 4))


def _stieltjes(hcal: np.ndarray, z: complex) -> tuple[np.ndarray, np.ndarray, complex]:
    p, q = hcal.shape
    r1 = np.linalg.inv(hcal @ hcal.T - z * np.eye(p))
    r2 = np.linalg.inv(hcal.T @ hcal - z * np.eye(q))
    return r1, r2, complex(np.trace(r2) / q)


def resolvent_snapshot(system: LinearizedSystem) -> ResolventSnapshot:
    """Invert H(z) directly and record the partial traces."""
    X, Y, z = system.X, system.Y, system.z
    _check_pole(X, Y, z)
    p, q, n = system.p, system.q, system.n
    try:
        G = np.linalg.inv(system.H)
    except np.linalg.LinAlgError as exc:
        raise PoleError("H(z) is singular", _nearest_null(X, Y, z)) from exc
    blocks = sample_blocks(X, Y)
    _, _, m = _stieltjes(blocks.hcal, z)
    m1, m2, m3, m4 = _partial_traces(G, p, q, n)
    return ResolventSnapshot(G, z, p, q, n, m1, m2, m3, m4, m, blocks, X, Y, system.H)


def schur_resolvent(Xd: np.ndarray, Yd: np.ndarray, z) -> ResolventSnapshot:
    """G(z) assembled from the Schur-complement blocks; also valid at ``z = 1``."""
    z = complex(z)
    if z == 0:
        raise DomainError("G(z) is not defined at z = 0")
    X = np.asarray(Xd, dtype=float)
    Y = np.asarray(Yd, dtype=float)
    _check_pole(X, Y, z)
    p, q, n = X.shape[0], Y.shape[0], X.shape[1]
    K = _k_block(z, n)
    xs = np.zeros((p + q, 2 * n))
    xs[:p, :n] = X
    xs[p:, n:] = Y
    GL = -np.linalg.inv(xs @ K @ xs.T)
    GLR = -GL @ xs @ K
    GR = K + K @ xs.T @ GL @ xs @ K
    G = np.block([[GL, GLR], [GLR.T, GR]])
    G = _maybe_real_matrix(G, z)
    blocks = sample_blocks(X, Y)
    _, _, m = _stieltjes(blocks.hcal, z)
    m1, m2, m3, m4 = _partial_traces(G, p, q, n)
    return ResolventSnapshot(G, z, p, q, n, m1, m2, m3, m4, m, blocks, X, Y)


# ---------------------------------------------------------------------------
# exact identities


@dataclass(frozen=True)
class IdentityResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _rel(a, b, scale: float = 0.0) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), scale, 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def _r_matrix(hcal: np.ndarray, z: complex) -> np.ndarray:
    p, q = hcal.shape
    s = complex(sqrt_z(z))
    mat = np.block([[-z * np.eye(p), -s * hcal], [-s * hcal.T, -z * np.eye(q)]])
    return np.linalg.inv(mat)


def _r_from_svd(hcal: np.ndarray, z: complex) -> np.ndarray:
    p, q = hcal.shape
    xi, sv, zeta_t = np.linalg.svd(hcal)  # xi: p x p, zeta_t: q x q
    lam = sv**2
    s = complex(sqrt_z(z))
    xi_q = xi[:, :q]
    zeta = zeta_t.T
    w = 1.0 / (lam - z)
    r11 = (xi_q * w) @ xi_q.T - (xi[:, q:] @ xi[:, q:].T) / z
    r12 = -(xi_q * (w * sv)) @ zeta.T / s
    r22 = (zeta * w) @ zeta.T
    return np.block([[r11, r12], [r12.T, r22]])


def check_identities(snap: ResolventSnapshot, tol: float = 1e-9) -> list[IdentityResult]:
    """Residuals of every exact finite-n relation between G, R and the partial traces."""
    p, q, n, z = snap.p, snap.q, snap.n, snap.z
    c1, c2 = p / n, q / n
    b = snap.blocks
    r1, r2, m = _stieltjes(b.hcal, z)
    s = complex(sqrt_z(z))
    out = []

    if snap.H is not None:
        res = np.linalg.norm(snap.H @ snap.G - np.eye(len(snap.G)), 2) / np.linalg.norm(snap.G, 2)
        out.append(IdentityResult("HG=I", float(res), tol))

    out.append(IdentityResult("m3-identity", _rel(snap.m3, c2 * z * (1 - z) * m + (1 - c1 - c2) * z), tol))
    out.append(IdentityResult("m4-identity", _rel(snap.m4, c2 * z * (1 - z) * m - (c1 - c2) + (1 - 2 * c2) * z), tol))
    out.append(IdentityResult("m3-m4", _rel(snap.m3 - snap.m4, (1 - z) * (c1 - c2),
                                             max(abs(snap.m3), abs(snap.m4))), tol))
    out.append(IdentityResult("trace-R1", _rel(np.trace(r1), q * m - (p - q) / z), tol))

    R = _r_matrix(b.hcal, z)
    r_blocks = np.block([[r1, -r1 @ b.hcal / s], [-b.hcal.T @ r1 / s, r2]])
    out.append(IdentityResult("R-blocks", _rel(R, r_blocks), tol))
    out.append(IdentityResult("R-spectral", _rel(R, _r_from_svd(b.hcal, z)), tol))

    dsq = np.zeros((p + q, p + q))
    dsq[:p, :p] = b.sxx_isqrt
    dsq[p:, p:] = b.syy_isqrt
    out.append(IdentityResult("GL-schur", _rel(snap.GL, dsq @ R @ dsq), tol))

    K = _k_block(z, n)
    xs = np.zeros((p + q, 2 * n))
    xs[:p, :n] = snap.X
    xs[p:, n:] = snap.Y
    out.append(IdentityResult("GR-schur", _rel(snap.GR, K + K @ xs.T @ snap.GL @ xs @ K), tol))
    out.append(IdentityResult("GLR-schur", _rel(snap.GLR, -snap.GL @ xs @ K), tol))
    out.append(IdentityResult("GRL-transpose", _rel(snap.G[p + q:, :p + q], snap.GLR.T), tol))
    return out


def random_instance(rng: np.random.Generator, max_pq: int = 30, max_n: int = 100):
    """Gaussian null pair with ``q <= p``, ``p + q < n``."""
    while True:
        n = int(rng.integers(20, max_n + 1))
        p = int(rng.integers(2, max_pq + 1))
        q = int(rng.integers(1, p + 1))
        if p + q <= n - 4:
            break
    X = rng.standard_normal((p, n)) / math.sqrt(n)
    Y = rng.standard_normal((q, n)) / math.sqrt(n)
    return X, Y


def identity_instance(seed: int, instance: int, max_pq: int = 30, max_n: int = 100,
                      tol: float = 1e-9) -> list[dict]:
    """Identity residuals for one random instance at one complex z and one real lambda."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(instance),))
    rng = np.random.Generator(np.random.Philox(ss))
    X, Y = random_instance(rng, max_pq, max_n)
    p, q, n = X.shape[0], Y.shape[0], X.shape[1]
    lam_plus = edge_locations((p / n, q / n))[1]
    top = scc_values(X, Y)[0]
    z_complex = complex(rng.uniform(0.05, 1.5), rng.uniform(0.01, 0.5))
    # real lambda in (lambda_+, 1), kept away from the finite-n top eigenvalue
    lam_real = 0.5 * (max(top, lam_plus) + 1.0)
    records = []
    for z in (z_complex, complex(lam_real)):
        snap = resolvent_snapshot(build_linearized(X, Y, z))
        for res in check_identities(snap, tol):
            records.append({
                "instance": int(instance), "p": p, "q": q, "n": n,
                "z_real": z.real, "z_imag": z.imag, **res.to_dict(),
            })
    return records


def identity_suite(seed: int = 0, count: int = 20, max_pq: int = 30, max_n: int = 100,
                   tol: float = 1e-9) -> list[dict]:
    out = []
    for k in range(count):
        out.extend(identity_instance(seed, k, max_pq, max_n, tol))
    return out


# ---------------------------------------------------------------------------
# anisotropic local law


@dataclass(frozen=True)
class LocalLawReport:
    z: complex
    max_error: float
    rms_error: float
    predicted_scale: float
    ratio: float
    outside: bool
    out_condition: float | None = None  # n eta sqrt(kappa + eta), logged only


def _probe_pairs(p: int, q: int, n: int, count: int, rng: np.random.Generator, kind: str):
    size = p + q + 2 * n
    b = _blocks(p, q, n)
    modes = ["mixed", (1, 1), (2, 2), (3, 3), (4, 4), (3, 4), (1, 2)]
    us, vs = np.zeros((size, count)), np.zeros((size, count))
    for k in range(count):
        mode = modes[k % len(modes)]
        if kind == "basis":
            a, c = rng.integers(0, size, size=2) if mode == "mixed" else (
                rng.integers(b[mode[0]].start, b[mode[0]].stop),
                rng.integers(b[mode[1]].start, b[mode[1]].stop),
            )
            us[a, k] = 1.0
            vs[c, k] = 1.0
            continue
        if mode == "mixed":
            u = rng.standard_normal(size)
            v = rng.standard_normal(size)
            us[:, k] = u / np.linalg.norm(u)
            vs[:, k] = v / np.linalg.norm(v)
        else:
            for vec, blk in ((us, b[mode[0]]), (vs, b[mode[1]])):
                w = rng.standard_normal(blk.stop - blk.start)
                vec[blk, k] = w / np.linalg.norm(w)
    return us, vs


def local_law_error(snap: ResolventSnapshot, context: TheoryContext | None = None,
                    probe_count: int = 64, seed: int = 0, phi_n: float | None = None,
                    probes: str = "sphere") -> LocalLawReport:
    """Compare ``u^T G v`` with ``u^T Pi v`` over random unit probes."""
    p, q, n, z = snap.p, snap.q, snap.n, snap.z
    dims = DimensionRatios(p, q, n, tau=0.0)
    context = context or TheoryContext.from_dims(dims)
    if phi_n is None:
        phi_n, _ = support_levels(n)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(1,))))
    us, vs = _probe_pairs(p, q, n, probe_count, rng, probes)
    g_uv = np.sum(us * (snap.G @ vs), axis=0)
    pi_uv = pi_limit(z, dims).bilinear(us, vs, p, q, n)
    err = np.abs(g_uv - pi_uv)
    outside = z.real > context.lambda_plus
    out_condition = None
    if outside:
        kappa = context.kappa(z.real)
        scale = phi_n + n**-0.5 * (kappa + z.imag) ** -0.25
        out_condition = n * z.imag * math.sqrt(kappa + z.imag)
    else:
        if z.imag <= 0:
            raise DomainError("inside the bulk the local law needs eta > 0")
        n_eta = n * z.imag
        scale = phi_n + math.sqrt(max(np.imag(mc(z, dims)), 0.0) / n_eta) + 1 / n_eta
    max_err = float(err.max())
    return LocalLawReport(z, max_err, float(np.sqrt(np.mean(err**2))), float(scale),
                          max_err / scale, bool(outside), out_condition)


@dataclass(frozen=True)
class ExtremeEigenvalueCheck:
    smallest: float
    largest: float
    lower: float
    upper: float

    @property
    def passed(self) -> bool:
        return self.lower <= self.smallest and self.largest <= self.upper


def extreme_eigenvalue_check(data: np.ndarray, slack: float = 0.1) -> ExtremeEigenvalueCheck:
    """Spectrum of ``data data^T`` against the Marchenko-Pastur edges ``(1 -+ sqrt(c))^2``."""
    dim, n = data.shape
    w = np.linalg.eigvalsh(data @ data.T)
    rc = math.sqrt(dim / n)
    return ExtremeEigenvalueCheck(float(w[0]), float(w[-1]), (1 - rc) ** 2 - slack, (1 + rc) ** 2 + slack)


# ---------------------------------------------------------------------------
# master determinant


@dataclass(frozen=True)
class SpikePerturbationBlocks:
    D: np.ndarray  # 2r x 2r, diag(a, b)
    U: np.ndarray  # (p+q) x 2r
    E: np.ndarray  # 2n x 2r

    @property
    def r(self) -> int:
        return self.D.shape[0] // 2


def perturbation_blocks(bundle) -> SpikePerturbationBlocks:
    """``D``, ``U``, ``E`` such that the signal equals ``U D E^T`` placed off-diagonally."""
    p, q, n, r = bundle.X.shape[0], bundle.Y.shape[0], bundle.X.shape[1], bundle.r
    D = np.diag(np.concatenate([bundle.a_values, bundle.b_values]))
    U = np.zeros((p + q, 2 * r))
    U[:p, :r] = bundle.u_a
    U[p:, r:] = bundle.u_b
    E = np.zeros((2 * n, 2 * r))
    E[:n, :r] = bundle.Z.T @ bundle.v_a
    E[n:, r:] = bundle.Z.T @ bundle.v_b
    return SpikePerturbationBlocks(D, U, E)


def _reduced_resolvent(X: np.ndarray, Y: np.ndarray, blocks: SpikePerturbationBlocks, lam) -> np.ndarray:
    """``(U, E)^T G(lambda) (U, E)`` via the Schur blocks, no dense H needed."""
    lam = complex(lam)
    p, q, n = X.shape[0], Y.shape[0], X.shape[1]
    s = complex(sqrt_z(lam))
    xs_top = np.zeros((p + q, 2 * n))
    xs_top[:p, :n] = X
    xs_top[p:, n:] = Y
    # K E and K-weighted data products without forming K
    E = blocks.E
    KE = np.vstack([lam * E[:n] + s * E[n:], s * E[:n] + lam * E[n:]])
    M = np.block([
        [lam * (X @ X.T), s * (X @ Y.T)],
        [s * (Y @ X.T), lam * (Y @ Y.T)],
    ])
    P = xs_top @ KE                                   # Xs K E
    solved = np.linalg.solve(M, np.hstack([blocks.U, P]))
    k = blocks.U.shape[1]
    GL_U, GL_P = -solved[:, :k], -solved[:, k:]
    uu = blocks.U.T @ GL_U
    ue = -blocks.U.T @ GL_P                           # U^T G_LR E = -U^T G_L Xs K E
    ee = E.T @ KE + P.T @ GL_P                        # E^T (K + K Xs^T G_L Xs K) E
    return np.block([[uu, ue], [ue.T, ee]])


def _j_matrix(D: np.ndarray) -> np.ndarray:
    k = D.shape[0]
    z = np.zeros((k, k))
    return np.block([[z, D], [D, z]])


def master_determinant(bundle, blocks: SpikePerturbationBlocks, lam, null_values=None) -> complex:
    """``det[1 + J (U,E)^T G(lambda) (U,E)]``; zero exactly at perturbed eigenvalues."""
    lam = complex(lam)
    if lam == 0:
        raise DomainError("lambda = 0 is excluded")
    _check_pole(bundle.X, bundle.Y, lam, null_values)
    red = _reduced_resolvent(bundle.X, bundle.Y, blocks, lam)
    val = np.linalg.det(np.eye(len(red)) + _j_matrix(blocks.D) @ red)
    return val.real if lam.imag == 0 else val


def _roots_on_grid(func, grid: np.ndarray, xtol: float) -> list[float]:
    vals = np.array([func(x) for x in grid])
    roots = []
    for k in range(len(grid) - 1):
        a, b = grid[k], grid[k + 1]
        fa, fb = vals[k], vals[k + 1]
        if fa == 0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(float(optimize.brentq(func, a, b, xtol=xtol, rtol=1e-15)))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    return roots


def master_roots(bundle, blocks: SpikePerturbationBlocks | None = None, grid_size: int = 4000,
                 xtol: float = 1e-13, max_grid: int = 128000) -> np.ndarray:
    """Zeros of the master determinant on (0, 1], descending.

    The determinant has poles at the null eigenvalues; multiplying by
    ``prod_k (lambda - lambda_k)`` removes them so every sign change is a root.
    The grid is refined until ``min(p, q)`` roots are bracketed or ``max_grid`` is hit.
    """
    blocks = blocks or perturbation_blocks(bundle)
    null_vals = scc_values(bundle.X, bundle.Y)
    expected = len(null_vals)

    def cleared(lam: float) -> float:
        d = master_determinant(bundle, blocks, lam, null_values=np.array([np.inf]))
        return float(d * np.prod(lam - null_vals))

    size = grid_size
    while True:
        grid = np.unique(np.concatenate([
            np.geomspace(1e-10, 1e-2, 200), np.linspace(1e-2, 1.0, size),
        ]))
        roots = _roots_on_grid(cleared, grid, xtol)
        if len(roots) >= expected or size >= max_grid:
            return np.sort(np.array(roots))[::-1]
        size *= 4


def surrogate_determinant(lam, spike_model, dims: DimensionRatios) -> complex:
    """Master determinant with ``(U,E)^T G (U,E)`` replaced by its deterministic limit."""
    r = spike_model.r
    red = pi_limit(lam, dims, r, spike_model.alignment).reduced
    D = np.diag(np.concatenate([spike_model.a_values, spike_model.b_values]))
    val = np.linalg.det(np.eye(4 * r) + _j_matrix(D) @ red)
    return val.real if complex(lam).imag == 0 else val


def surrogate_roots(spike_model, context: TheoryContext, grid_size: int = 4000) -> np.ndarray:
    """Zeros of the surrogate determinant on ``(lambda_+, 1)``: the classical outlier locations."""
    lo = context.lambda_plus
    grid = lo + (1 - lo) * np.linspace(0, 1, grid_size + 1)[1:-1] ** 2
    func = lambda x: surrogate_determinant(x, spike_model, context.dims)
    return np.sort(np.array(_roots_on_grid(func, grid, 1e-14)))[::-1]


def outlier_master_solve(t: float, context: TheoryContext) -> float:
    """Solve ``f_c(theta) = t`` on ``(lambda_+, 1]`` by bracketing."""
    if t <= context.t_threshold:
        raise DomainError(f"no outlier: t = {t:.6g} <= t_c = {context.t_threshold:.6g}")
    if t > 1:
        raise DomainError("t must not exceed 1")
    lam_plus = context.lambda_plus
    # lambda = lambda_+ + s^2 straightens the square-root edge
    func = lambda s: fc(lam_plus + s * s, context.dims) - t
    s_max = math.sqrt(1 - lam_plus)
    if func(s_max) <= 0:
        return 1.0
    s = optimize.brentq(func, 0.0, s_max, xtol=1e-16, rtol=1e-15, maxiter=500)
    return lam_plus + s * s
