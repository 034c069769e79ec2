"""Counting-based spectral routines for symmetric tridiagonal operators.

The workhorse is the Sturm negative-pivot count of the shifted LDL^T
factorization: `sturm_count(H, E)` returns #{eigenvalues < E} exactly (up to
floating-point pivot signs), in O(L) flops and without forming any matrix.
Window counts, bisection eigenvalue extraction, and the batched Monte Carlo
kernels are all built on it. Dense LAPACK diagonalization is available as an
independent oracle for small matrices only.

Eigenvalue indices are 1-based (E_1 <= ... <= E_L); site indices are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .operators import TridiagonalOperator

_TINY = 1e-300  # pivot clamp; preserves sign, zero maps to +tiny

DEFAULT_MAX_WINDOW_EIGS = 512
DEFAULT_ORACLE_MAX = 64


def sturm_counts(diag, offdiag, shifts) -> np.ndarray:
    """Vectorized negative-pivot counts: #{eigenvalues < shift}.

    diag: (..., L); offdiag: (..., L-1) or (L-1,); shifts: broadcastable to
    the batch shape of diag. Returns int64 counts of the leading batch shape.
    Pivots with |d| < 1e-300 are clamped to +/-1e-300 keeping their sign
    (exact zeros clamp to +tiny), which preserves the count and makes the
    recurrence division-safe.
    """
    diag = np.asarray(diag, dtype=np.float64)
    shifts = np.asarray(shifts, dtype=np.float64)
    offsq = np.square(np.asarray(offdiag, dtype=np.float64))
    size = diag.shape[-1]

    def clamp(x):
        return np.where(
            np.abs(x) < _TINY, np.where(x == 0.0, _TINY, np.copysign(_TINY, x)), x
        )

    d = clamp(diag[..., 0] - shifts)
    count = (d < 0).astype(np.int64)
    for k in range(1, size):
        d = clamp((diag[..., k] - shifts) - offsq[..., k - 1] / d)
        count += d < 0
    return count


def sturm_count(op: TridiagonalOperator, energy: float) -> int:
    """#{eigenvalues of op strictly below energy}."""
    return int(sturm_counts(op.diag, op.offdiag, float(energy)))


def count_in_interval(op: TridiagonalOperator, lo: float, hi: float) -> int:
    """Number of eigenvalues in the half-open interval (lo, hi]."""
    if not lo <= hi:
        raise ValueError("need lo <= hi")
    edges = np.nextafter([lo, hi], np.inf)
    c = sturm_counts(op.diag, op.offdiag, edges)
    return int(c[1] - c[0])


def _bisect_indices(diag, offsq_offdiag, targets, lo, hi, tol):
    """Bisection for eigenvalues with 1-based indices `targets` (vectorized).

    Invariant per target j: count(lo) < j <= count(hi). Terminates when the
    bracket width is below max(tol, 4 ulp); all brackets start equal so a
    fixed iteration count suffices.
    """
    targets = np.asarray(targets, dtype=np.int64)
    lo = np.full(targets.shape, lo, dtype=np.float64)
    hi = np.full(targets.shape, hi, dtype=np.float64)
    scale = float(np.max(np.abs([lo.ravel()[0], hi.ravel()[0]]))) if targets.size else 1.0
    tol_eff = max(tol, 4.0 * np.spacing(scale))
    width = float(hi.ravel()[0] - lo.ravel()[0]) if targets.size else 0.0
    iters = max(1, int(np.ceil(np.log2(max(width / tol_eff, 2.0)))) + 1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        counts = sturm_counts(diag, offsq_offdiag, mid)
        above = counts >= targets
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= np.maximum(tol, 4.0 * np.spacing(np.abs(mid)))):
            break
    return 0.5 * (lo + hi)


def eigenvalues_in(
    op: TridiagonalOperator,
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_window_eigs: int = DEFAULT_MAX_WINDOW_EIGS,
) -> np.ndarray:
    """All eigenvalues in (lo, hi], sorted, each located to width <= tol.

    Counting-indexed bisection: multiplicities are resolved exactly (a k-fold
    eigenvalue appears k times). Refuses windows holding more than
    `max_window_eigs` eigenvalues.
    """
    if not lo <= hi:
        raise ValueError("need lo <= hi")
    lo_e, hi_e = np.nextafter([lo, hi], np.inf)
    c = sturm_counts(op.diag, op.offdiag, np.array([lo_e, hi_e]))
    n_here = int(c[1] - c[0])
    if n_here == 0:
        return np.empty(0)
    if n_here > max_window_eigs:
        raise ValueError(
            f"window holds {n_here} eigenvalues > max_window_eigs="
            f"{max_window_eigs}; shrink the window or raise the cap"
        )
    targets = np.arange(int(c[0]) + 1, int(c[1]) + 1)
    vals = _bisect_indices(op.diag, op.offdiag, targets, lo_e, hi_e, tol)
    return np.sort(vals)


@dataclass(frozen=True, eq=False)
class SpectralWindowCount:
    """Eigenvalue count and locations for one window of one operator."""

    window: tuple[float, float]
    count: int
    eigenvalues: np.ndarray
    eigenvectors: tuple = ()


def spectral_window(
    op: TridiagonalOperator,
    lo: float,
    hi: float,
    tol: float = 1e-12,
    extract_vectors: bool = False,
    max_window_eigs: int = DEFAULT_MAX_WINDOW_EIGS,
) -> SpectralWindowCount:
    vals = eigenvalues_in(op, lo, hi, tol, max_window_eigs)
    vecs = ()
    if extract_vectors:
        vecs = tuple(eigenvector(op, float(v)).vector for v in vals)
    return SpectralWindowCount((float(lo), float(hi)), vals.size, vals, vecs)


def batched_eigenvalues_in(
    diag2d: np.ndarray,
    offdiag,
    lo: float,
    hi: float,
    tol: float = 1e-10,
    chunk: int = 4096,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in (lo, hi] for a batch of operators sharing couplings.

    diag2d: (batch, L); offdiag: (L-1,) shared or (batch, L-1).
    Returns (draw_index, value) arrays, sorted by draw then by value.
    """
    diag2d = np.asarray(diag2d, dtype=np.float64)
    offdiag = np.asarray(offdiag, dtype=np.float64)
    lo_e, hi_e = np.nextafter([lo, hi], np.inf)
    c_lo = sturm_counts(diag2d, offdiag, lo_e)
    c_hi = sturm_counts(diag2d, offdiag, hi_e)
    per_draw = (c_hi - c_lo).astype(np.int64)
    draws = np.repeat(np.arange(diag2d.shape[0]), per_draw)
    # 1-based eigenvalue indices within each draw
    targets = np.concatenate(
        [np.arange(a + 1, b + 1) for a, b in zip(c_lo, c_hi) if b > a]
        or [np.empty(0, dtype=np.int64)]
    )
    values = np.empty(draws.size)
    for start in range(0, draws.size, chunk):
        sel = slice(start, min(start + chunk, draws.size))
        dsel = diag2d[draws[sel]]
        osel = offdiag if offdiag.ndim == 1 else offdiag[draws[sel]]
        values[sel] = _bisect_indices(dsel, osel, targets[sel], lo_e, hi_e, tol)
    return draws, values


def _nearest_index_value(op, j, lo, hi, tol):
    """Eigenvalue E_j located by bisection; requires count(lo) < j <= count(hi)."""
    return float(_bisect_indices(op.diag, op.offdiag, np.array([j]), lo, hi, tol)[0])


def nearest_eigenvalue_distance(
    op: TridiagonalOperator, energy: float, tol: float = 0.0
) -> float:
    """Distance from `energy` to the spectrum of op."""
    glo, ghi = op.gershgorin()
    glo, ghi = glo - 1.0, ghi + 1.0
    if energy <= glo:
        glo = float(energy) - 1.0
    if energy >= ghi:
        ghi = float(energy) + 1.0
    j = int(sturm_counts(op.diag, op.offdiag, float(energy)))
    best = np.inf
    if j >= 1:
        below = _nearest_index_value(op, j, glo, float(energy), tol)
        best = min(best, abs(energy - below))
    if j < op.size:
        above = _nearest_index_value(op, j + 1, np.nextafter(energy, -np.inf), ghi, tol)
        best = min(best, abs(above - energy))
    return float(best)


# ---------------------------------------------------------------------------
# eigenvectors


@dataclass(frozen=True, eq=False)
class EigenvectorResult:
    """Inverse-iteration output with residual and isolation diagnostics.

    `flagged` is set when another eigenvalue sits within `cluster_tol` of the
    Rayleigh quotient; `cluster` then carries an orthonormal basis of the
    near-degenerate group (it holds just the vector itself otherwise).
    """

    value: float
    vector: np.ndarray
    residual: float
    gap: float
    flagged: bool
    cluster: tuple = field(repr=False, default=())


def _solve_shifted(op, shift, rhs):
    ab = np.zeros((3, op.size))
    ab[0, 1:] = op.offdiag
    ab[1, :] = op.diag - shift
    ab[2, :-1] = op.offdiag
    return scipy.linalg.solve_banded((1, 1), ab, rhs)


def _canonical_sign(v):
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def eigenvector(
    op: TridiagonalOperator,
    energy: float,
    seed: int = 0,
    max_iter: int = 8,
    cluster_tol: float | None = None,
    gap_floor: float | None = None,
) -> EigenvectorResult:
    """Unit eigenvector for the eigenvalue nearest `energy`.

    Inverse iteration from a deterministic seeded start vector; the sign is
    fixed by making the largest-magnitude entry positive. Near-degenerate
    eigenvalues (gap <= gap_floor) yield a flagged result carrying the whole
    cluster basis instead of an error.
    """
    scale = op.norm_bound()
    if cluster_tol is None:
        cluster_tol = 1e-12 * scale
    if gap_floor is None:
        gap_floor = cluster_tol
    rng = np.random.Generator(
        np.random.Philox(key=np.array([seed & (2**64 - 1), 0x9E3779B9], dtype=np.uint64))
    )
    v = rng.standard_normal(op.size)
    v /= np.linalg.norm(v)
    shift = float(energy)
    resid = np.inf
    for _ in range(max_iter):
        try:
            w = _solve_shifted(op, shift, v)
        except np.linalg.LinAlgError:
            shift = shift + 1e-13 * scale
            continue
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            shift = shift + 1e-13 * scale
            continue
        v = w / nw
        ray = float(v @ op.apply(v))
        resid = float(np.linalg.norm(op.apply(v) - ray * v))
        if resid <= 1e-10 * scale:
            break
    ray = float(v @ op.apply(v))
    resid = float(np.linalg.norm(op.apply(v) - ray * v))
    n_cluster = count_in_interval(op, ray - cluster_tol, ray + cluster_tol)
    n_cluster = max(n_cluster, 1)
    glo, ghi = op.gershgorin()
    glo, ghi = glo - 1.0, ghi + 1.0
    j_lo = int(sturm_counts(op.diag, op.offdiag, np.nextafter(ray - cluster_tol, np.inf)))
    j_hi = j_lo + n_cluster
    gap = np.inf
    if j_lo >= 1:
        below = _nearest_index_value(op, j_lo, glo, ray - cluster_tol, 0.0)
        gap = min(gap, ray - below)
    if j_hi < op.size:
        above = _nearest_index_value(op, j_hi + 1, ray + cluster_tol, ghi, 0.0)
        gap = min(gap, above - ray)
    flagged = n_cluster > 1 or gap <= gap_floor
    v = _canonical_sign(v)
    cluster = (v,)
    if n_cluster > 1:
        # orthogonalized inverse iteration for the near-degenerate group
        vecs = [v]
        shift_c = ray + 3e-14 * scale
        for _ in range(1, n_cluster):
            w = rng.standard_normal(op.size)
            w /= np.linalg.norm(w)
            for _ in range(max_iter):
                try:
                    w = _solve_shifted(op, shift_c, w)
                except np.linalg.LinAlgError:
                    shift_c += 1e-14 * scale
                    continue
                for b in vecs:
                    w -= (b @ w) * b
                nw = np.linalg.norm(w)
                if nw == 0.0:
                    w = rng.standard_normal(op.size)
                    nw = np.linalg.norm(w)
                w /= nw
            for b in vecs:
                w -= (b @ w) * b
            nw = np.linalg.norm(w)
            if nw > 0:
                vecs.append(_canonical_sign(w / nw))
        cluster = tuple(vecs)
    return EigenvectorResult(ray, v, resid, float(gap), bool(flagged), cluster)


def localization_center(vector: np.ndarray) -> int:
    """1-based site of the largest |entry|; ties resolve to the first."""
    v = np.asarray(vector)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a nonempty vector")
    return int(np.argmax(np.abs(v))) + 1


def envelope_decay_rate(vector: np.ndarray, center: int | None = None) -> float:
    """Least-squares exponential decay rate of |v| away from its center.

    Fits log|v(n)| ~ const - rate * |n - center| over entries above the
    floor 1e-300; positive return means decay.
    """
    v = np.abs(np.asarray(vector, dtype=np.float64))
    if center is None:
        center = localization_center(v)
    dist = np.abs(np.arange(1, v.size + 1) - center)
    keep = v > 1e-300
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(dist[keep], np.log(v[keep]), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# dense oracle


def dense_spectrum(
    op: TridiagonalOperator,
    vectors: bool = False,
    oracle_max: int = DEFAULT_ORACLE_MAX,
):
    """Full spectrum via LAPACK, for small matrices only.

    Independent of the Sturm/bisection path; used as a cross-checking oracle.
    Raises for sizes above `oracle_max` to keep it out of hot loops.
    """
    if op.size > oracle_max:
        raise ValueError(
            f"dense oracle capped at {oracle_max} (got {op.size}); "
            "raise oracle_max explicitly for reference computations"
        )
    if vectors:
        vals, vecs = np.linalg.eigh(op.to_dense())
        return vals, vecs
    return np.linalg.eigvalsh(op.to_dense())
