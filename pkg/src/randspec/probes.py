"""Monte Carlo probes for eigenvalue-count statistics on random boxes.

Each probe draws many independent box operators, reduces every draw to
integer window counts via Sturm counting (no eigenvalue extraction in the
hot loops, except where spacings require locations), and aggregates block by
block. All accumulators are integers or fixed-order float merges, so every
probe is bit-for-bit reproducible for a fixed seed, independent of the
worker count.

Probes report a ProbeReport: named point estimates with confidence intervals
(Wilson for proportions, normal for means), the parameters, sample size,
seed, and wall time. The JSON form is canonical apart from the volatile
`runtime_s` field.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import _blocks
from .eigensolve import batched_eigenvalues_in, sturm_counts
from .ids import IdsTable, estimate_ids
from .operators import (
    EnsembleSpec,
    IntervalGraphFamily,
    coefficients,
    draw_width,
    omega_block,
)

SCHEMA_VERSION = 1
_Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class Estimate:
    """One named statistic with an optional confidence interval."""

    name: str
    value: float
    ci: tuple[float, float] | None = None


@dataclass
class ProbeReport:
    """Outcome of one probe run; serializes to versioned canonical JSON."""

    name: str
    params: dict
    estimates: list[Estimate]
    samples: int
    seed: int
    runtime_s: float

    def estimate(self, name: str) -> Estimate:
        for e in self.estimates:
            if e.name == name:
                return e
        raise KeyError(f"no estimate named {name!r}")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "params": _jsonable(self.params),
            "estimates": [
                {
                    "name": e.name,
                    "value": _jsonable(e.value),
                    "ci": _jsonable(list(e.ci)) if e.ci is not None else None,
                }
                for e in self.estimates
            ],
            "samples": self.samples,
            "seed": self.seed,
            "runtime_s": self.runtime_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True, eq=False)
class PointProcessSample:
    """Unfolded eigenvalues of one draw inside one observation window."""

    index: int
    center: float
    window: tuple[float, float]
    points: np.ndarray


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _law_params(law) -> dict:
    d = dataclasses.asdict(law)
    d["type"] = type(law).__name__
    return d


# ---------------------------------------------------------------------------
# statistics helpers


def wilson_ci(k: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (0.0, 1.0)
    ph = k / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def normal_ci(mean: float, sd: float, n: int, z: float = _Z95):
    if n <= 1:
        return (-math.inf, math.inf)
    half = z * sd / math.sqrt(n)
    return (mean - half, mean + half)


def poisson_pmf_with_tail(mean: float, kcap: int) -> np.ndarray:
    """[P(0), ..., P(kcap - 1), P(>= kcap)]: an exact partition of mass 1."""
    if mean < 0:
        raise ValueError("mean must be nonnegative")
    k = np.arange(kcap)
    if mean == 0.0:
        pmf = np.zeros(kcap)
        pmf[0] = 1.0
    else:
        pmf = np.exp(k * math.log(mean) - mean - [math.lgamma(i + 1.0) for i in k])
    tail = max(0.0, 1.0 - float(pmf.sum()))
    return np.concatenate([pmf, [tail]])


def tv_to_poisson(hist: np.ndarray, mean: float) -> float:
    """Total variation between an overflow-binned count histogram and
    Poisson(mean) on the partition {0, 1, ..., kcap-1, >= kcap}."""
    hist = np.asarray(hist, dtype=np.float64)
    n = hist.sum()
    if n == 0:
        return 1.0
    pi = poisson_pmf_with_tail(mean, hist.size - 1)
    return 0.5 * float(np.abs(hist / n - pi).sum())


def tv_to_poisson_product(joint: np.ndarray, mean_a: float, mean_b: float) -> float:
    """TV between a 2-d overflow-binned histogram and the product of two
    Poisson laws, on the product partition."""
    joint = np.asarray(joint, dtype=np.float64)
    n = joint.sum()
    if n == 0:
        return 1.0
    pa = poisson_pmf_with_tail(mean_a, joint.shape[0] - 1)
    pb = poisson_pmf_with_tail(mean_b, joint.shape[1] - 1)
    return 0.5 * float(np.abs(joint / n - np.outer(pa, pb)).sum())


def ks_to_exponential(sorted_samples: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance to the unit exponential law."""
    x = np.asarray(sorted_samples, dtype=np.float64)
    m = x.size
    if m == 0:
        return 1.0
    cdf = 1.0 - np.exp(-x)
    i = np.arange(m)
    return float(
        max(np.max(np.abs(cdf - i / m)), np.max(np.abs(cdf - (i + 1) / m)))
    )


def log_slope(widths, values) -> tuple[float, float, int]:
    """OLS slope of log(value) vs log(width) over points with
    0 < value <= 0.1 (the sub-linear regime); returns (slope, stderr, n)."""
    w = np.asarray(widths, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    keep = (v > 0.0) & (v <= 0.1)
    if keep.sum() < 2:
        return (math.nan, math.nan, int(keep.sum()))
    x = np.log(w[keep])
    y = np.log(v[keep])
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - ym - slope * (x - xm)
    if n > 2:
        se = math.sqrt(float(np.sum(resid**2)) / (n - 2) / sxx)
    else:
        se = math.nan
    return (slope, se, n)


# ---------------------------------------------------------------------------
# block engine: window counts


@dataclass(frozen=True)
class _WindowJob:
    spec: EnsembleSpec
    size: int
    seed: int
    total: int
    windows: tuple  # ((lo, hi), ...) exact endpoints; worker applies nextafter
    kcap: int = 64
    stream: int = _blocks.STREAM_PRIMARY
    joint_pair: tuple[int, int] | None = None
    split: int | None = None  # windows[split:] evaluated on an independent draw
    post_affine: tuple[float, float] | None = None  # diag -> a + b * diag


def _counts_for(job, diag, off, window_slice):
    edges = np.array([e for w in job.windows[window_slice] for e in w])
    edges = np.nextafter(edges, np.inf)
    s = sturm_counts(diag, off, edges[:, None])  # (2W, rows)
    return s[1::2] - s[0::2]


def _window_block(job: _WindowJob, block: int):
    rows = _blocks.block_rows(job.total, draw_width(job.spec, job.size), block)
    omega = omega_block(job.spec, job.size, job.seed, block, rows, job.stream)
    diag, off = coefficients(job.spec, job.size, omega)
    if job.post_affine is not None:
        a, b = job.post_affine
        diag = a + b * diag
    if job.split is None:
        counts = _counts_for(job, diag, off, slice(None))
    else:
        omega2 = omega_block(
            job.spec, job.size, job.seed, block, rows, _blocks.STREAM_SECONDARY
        )
        diag2, off2 = coefficients(job.spec, job.size, omega2)
        if job.post_affine is not None:
            a, b = job.post_affine
            diag2 = a + b * diag2
        counts = np.concatenate(
            [
                _counts_for(job, diag, off, slice(None, job.split)),
                _counts_for(job, diag2, off2, slice(job.split, None)),
            ]
        )
    n_win = counts.shape[0]
    kcap = job.kcap
    clipped = np.minimum(counts, kcap)
    hist = np.zeros((n_win, kcap + 1), dtype=np.int64)
    for w in range(n_win):
        hist[w] = np.bincount(clipped[w], minlength=kcap + 1)
    excess = np.maximum(counts - 1, 0)
    joint = None
    if job.joint_pair is not None:
        i, j = job.joint_pair
        idx = clipped[i] * (kcap + 1) + clipped[j]
        joint = np.bincount(idx, minlength=(kcap + 1) ** 2).reshape(
            kcap + 1, kcap + 1
        )
    return {
        "hist": hist,
        "occupancy": (counts >= 1).sum(axis=1),
        "count_sum": counts.sum(axis=1),
        "count_sq": (counts * counts).sum(axis=1),
        "excess_sum": excess.sum(axis=1),
        "excess_sq": (excess * excess).sum(axis=1),
        "pair_prod": counts @ counts.T,
        "joint": joint,
    }


def _run_window_job(job: _WindowJob, workers: int) -> dict:
    blocks = _blocks.n_blocks(job.total, draw_width(job.spec, job.size))
    parts = _blocks.map_blocks(partial(_window_block, job), blocks, workers)
    out = parts[0]
    for p in parts[1:]:
        for key, val in p.items():
            if val is not None:
                out[key] = out[key] + val
    return out


# ---------------------------------------------------------------------------
# occupancy probes (Wegner / Minami scaling)


def wegner_probe(
    spec: EnsembleSpec,
    energy: float,
    widths,
    size: int,
    samples: int,
    seed: int = 0,
    workers: int = 1,
) -> ProbeReport:
    """Window occupancy P[at least one eigenvalue in [E - eps, E + eps]].

    Reports p_hat per half-width eps with Wilson CIs, the log-log slope over
    the sub-linear regime 0 < p_hat <= 0.1 (linear Wegner scaling gives
    slope 1), and C_hat = max p_hat / (eps L), the empirical constant of the
    bound p_hat <= C eps L.
    """
    t0 = time.perf_counter()
    widths = sorted(float(w) for w in widths)
    if not widths or widths[0] <= 0:
        raise ValueError("need positive window half-widths")
    windows = tuple((energy - w, energy + w) for w in widths)
    job = _WindowJob(spec, size, seed, samples, windows)
    stats = _run_window_job(job, workers)
    p = stats["occupancy"] / samples
    ests = [
        Estimate(f"p_hat[{w:.6g}]", float(p[i]), wilson_ci(int(stats["occupancy"][i]), samples))
        for i, w in enumerate(widths)
    ]
    slope, se, npts = log_slope(widths, p)
    ests.append(Estimate("slope", slope, _slope_ci(slope, se)))
    c_hat = float(np.max(p / (np.asarray(widths) * size)))
    ests.append(Estimate("C_hat", c_hat))
    return ProbeReport(
        "wegner",
        {
            "kind": spec.kind,
            "law": _law_params(spec.law),
            "size": size,
            "energy": energy,
            "widths": widths,
            "slope_points": npts,
        },
        ests,
        samples,
        seed,
        time.perf_counter() - t0,
    )


def _slope_ci(slope, se):
    if not (math.isfinite(slope) and math.isfinite(se)):
        return None
    return (slope - _Z95 * se, slope + _Z95 * se)


def minami_probe(
    spec: EnsembleSpec,
    energy: float,
    widths,
    size: int,
    samples: int,
    seed: int = 0,
    workers: int = 1,
) -> ProbeReport:
    """Mean excess E[max(count - 1, 0)] in [E - eps, E + eps] per half-width.

    The excess equals sum_{k >= 2} P[count >= k] (layer cake), the quantity
    bounded quadratically by pair estimates; quadratic scaling gives log-log
    slope 2, and >= 3/2 marks pair suppression at band edges. Means carry
    normal CIs (they are not proportions); P[count >= 2] is also reported
    with a Wilson CI.
    """
    t0 = time.perf_counter()
    widths = sorted(float(w) for w in widths)
    if not widths or widths[0] <= 0:
        raise ValueError("need positive window half-widths")
    windows = tuple((energy - w, energy + w) for w in widths)
    job = _WindowJob(spec, size, seed, samples, windows)
    stats = _run_window_job(job, workers)
    m = stats["excess_sum"] / samples
    var = np.maximum(stats["excess_sq"] / samples - m**2, 0.0)
    ests = []
    for i, w in enumerate(widths):
        ests.append(
            Estimate(
                f"m_hat[{w:.6g}]",
                float(m[i]),
                normal_ci(float(m[i]), math.sqrt(var[i]), samples),
            )
        )
        k2 = samples - int(stats["hist"][i, 0] + stats["hist"][i, 1])
        ests.append(Estimate(f"p2_hat[{w:.6g}]", k2 / samples, wilson_ci(k2, samples)))
    slope, se, npts = log_slope(widths, m)
    ests.append(Estimate("slope", slope, _slope_ci(slope, se)))
    return ProbeReport(
        "minami",
        {
            "kind": spec.kind,
            "law": _law_params(spec.law),
            "size": size,
            "energy": energy,
            "widths": widths,
            "slope_points": npts,
        },
        ests,
        samples,
        seed,
        time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# two-energy decorrelation


def decorrelation_probe(
    spec: EnsembleSpec,
    energy_a: float,
    energy_b: float,
    size: int,
    samples: int,
    seed: int = 0,
    workers: int = 1,
    half_width: float | None = None,
    disjoint: bool = False,
) -> ProbeReport:
    """Joint vs product occupancy of two energy windows of width 2/L.

    Same-draw mode measures P[both windows hit] / (P[A] P[B]) with a
    delta-method CI on the log ratio; independence of distant energies
    predicts ratio 1. `disjoint=True` evaluates the second window on an
    independent draw (a physically separated box), a positive control that
    must always give ratio 1. For the pure hopping model at mirrored
    energies (energy_b == -energy_a) the two events coincide exactly by
    symmetry; the observed disagreement count is then reported as
    `event_mismatch`.
    """
    t0 = time.perf_counter()
    if half_width is None:
        half_width = 1.0 / size
    wa = (energy_a - half_width, energy_a + half_width)
    wb = (energy_b - half_width, energy_b + half_width)
    job = _WindowJob(
        spec,
        size,
        seed,
        samples,
        (wa, wb),
        joint_pair=(0, 1),
        split=1 if disjoint else None,
    )
    stats = _run_window_job(job, workers)
    joint = stats["joint"]
    n = samples
    n_both = int(joint[1:, 1:].sum())
    n_a = int(stats["occupancy"][0])
    n_b = int(stats["occupancy"][1])
    p11, pa, pb = n_both / n, n_a / n, n_b / n
    ests = [
        Estimate("p_joint", p11, wilson_ci(n_both, n)),
        Estimate("p_first", pa, wilson_ci(n_a, n)),
        Estimate("p_second", pb, wilson_ci(n_b, n)),
    ]
    if p11 > 0 and pa > 0 and pb > 0:
        ratio = p11 / (pa * pb)
        v11 = p11 * (1 - p11)
        vaa = pa * (1 - pa)
        vbb = pb * (1 - pb)
        c11a = p11 * (1 - pa)
        c11b = p11 * (1 - pb)
        cab = p11 - pa * pb
        var_log = (
            v11 / p11**2
            + vaa / pa**2
            + vbb / pb**2
            - 2 * c11a / (p11 * pa)
            - 2 * c11b / (p11 * pb)
            + 2 * cab / (pa * pb)
        ) / n
        half = _Z95 * math.sqrt(max(var_log, 0.0))
        ests.append(
            Estimate("ratio", ratio, (ratio * math.exp(-half), ratio * math.exp(half)))
        )
        var_d = (
            v11
            + pb**2 * vaa
            + pa**2 * vbb
            - 2 * pb * c11a
            - 2 * pa * c11b
            + 2 * pa * pb * cab
        )
        z = (p11 - pa * pb) / math.sqrt(max(var_d / n, 1e-300))
        ests.append(Estimate("excess_sigma", z))
    else:
        ests.append(Estimate("ratio", math.nan))
        ests.append(Estimate("excess_sigma", math.nan))
    if not disjoint and spec.kind == "hopping" and energy_b == -energy_a:
        mismatch = n_a + n_b - 2 * n_both
        ests.append(Estimate("event_mismatch", float(mismatch)))
    return ProbeReport(
        "decorrelation",
        {
            "kind": spec.kind,
            "law": _law_params(spec.law),
            "size": size,
            "energy_a": energy_a,
            "energy_b": energy_b,
            "half_width": half_width,
            "disjoint": disjoint,
        },
        ests,
        samples,
        seed,
        time.perf_counter() - t0,
    )

# ---------------------------------------------------------------------------
# local statistics around a reference energy


def _ids_for(
    spec,
    size,
    center,
    seed,
    workers,
    table,
    half_width,
    points,
    samples,
    extra_centers=(),
    max_offset=4.0,
):
    """Integrated-density table for unfolding near the given centers.

    When no table is supplied, estimates one in two stages: a coarse pass
    over [center - half_width, center + half_width] pins the local density,
    then a fine high-sample pass covers just the span the windows need
    (max_offset mean spacings plus safety margin on each side). Unfolding
    precision is what limits the count statistics, so the sample budget is
    concentrated on the few relevant spacings around each center.
    """
    if table is not None:
        return table
    centers = (center, *extra_centers)
    coarse_grid = np.unique(
        np.concatenate([np.linspace(c - half_width, c + half_width, 41) for c in centers])
    )
    coarse = estimate_ids(
        spec, size, 64, coarse_grid, seed=seed, workers=workers,
        stream=_blocks.STREAM_IDS,
    )
    fine = []
    for c in centers:
        pair = coarse.evaluate(np.array([c - 0.2, c + 0.2]))
        density = max((pair[1] - pair[0]) / 0.4, 1e-3)
        span = 2.5 * (max_offset + 2.0) / (size * density)
        fine.append(np.linspace(c - span, c + span, points))
    grid = np.unique(np.concatenate(fine))
    return estimate_ids(
        spec, size, samples, grid, seed=seed, workers=workers,
        stream=_blocks.STREAM_IDS,
    )


def _unfolded_window_edges(table, size, center, offsets):
    """Energies whose unfolded coordinates sit at N(center) * L + offset."""
    n0 = float(table.evaluate(np.array([center]))[0])
    targets = n0 + np.asarray(offsets, dtype=np.float64) / size
    return table.inverse(targets)


def level_statistics_probe(
    spec: EnsembleSpec,
    energy: float,
    size: int,
    samples: int,
    seed: int = 0,
    workers: int = 1,
    intervals=((0.0, 1.0), (1.0, 2.0), (0.0, 2.0)),
    ids_table: IdsTable | None = None,
    ids_half_width: float = 0.75,
    ids_points: int = 161,
    ids_samples: int = 2048,
    kcap: int = 64,
    collect: int = 0,
) -> tuple[ProbeReport, list[PointProcessSample]]:
    """Counting statistics of the unfolded spectrum near a reference energy.

    Each interval (a, b) in unfolded (mean-spacing) units is mapped back to
    an energy window through the inverse integrated density of states; the
    count histogram over draws is compared to Poisson(b - a) in total
    variation, and the count correlation across the first two intervals is
    reported as corr_z = r * sqrt(n) (asymptotically standard normal under
    independence). With collect > 0 the unfolded point configurations of the
    first `collect` draws are returned alongside the report.
    """
    t0 = time.perf_counter()
    intervals = [(float(a), float(b)) for a, b in intervals]
    for a, b in intervals:
        if not b > a:
            raise ValueError("intervals must have positive length")
    table = _ids_for(
        spec, size, energy, seed, workers, ids_table,
        ids_half_width, ids_points, ids_samples,
        max_offset=max(abs(x) for ab in intervals for x in ab),
    )
    windows = []
    for a, b in intervals:
        lo, hi = _unfolded_window_edges(table, size, energy, (a, b))
        windows.append((float(lo), float(hi)))
    pair = (0, 1) if len(intervals) >= 2 else None
    job = _WindowJob(
        spec, size, seed, samples, tuple(windows), kcap=kcap, joint_pair=pair
    )
    stats = _run_window_job(job, workers)
    ests = []
    for i, (a, b) in enumerate(intervals):
        length = b - a
        tv = tv_to_poisson(stats["hist"][i], length)
        mean = stats["count_sum"][i] / samples
        var = max(stats["count_sq"][i] / samples - mean**2, 0.0)
        tag = f"{a:.6g},{b:.6g}"
        ests.append(Estimate(f"tv_poisson[{tag}]", tv))
        ests.append(
            Estimate(
                f"mean_count[{tag}]",
                float(mean),
                normal_ci(float(mean), math.sqrt(var), samples),
            )
        )
    if pair is not None:
        ests.append(Estimate("corr_z", _pair_corr_z(stats, samples)))
    report = ProbeReport(
        "level_statistics",
        {
            "kind": spec.kind,
            "law": _law_params(spec.law),
            "size": size,
            "energy": energy,
            "intervals": intervals,
            "windows": windows,
            "kcap": kcap,
        },
        ests,
        samples,
        seed,
        time.perf_counter() - t0,
    )
    configs = []
    if collect > 0:
        lo = min(w[0] for w in windows)
        hi = max(w[1] for w in windows)
        configs = _collect_unfolded(
            spec, size, seed, collect, lo, hi, table, energy
        )
    report.runtime_s = time.perf_counter() - t0
    return report, configs


def _pair_corr_z(stats, n):
    m1 = stats["count_sum"][0] / n
    m2 = stats["count_sum"][1] / n
    v1 = stats["count_sq"][0] / n - m1**2
    v2 = stats["count_sq"][1] / n - m2**2
    if v1 <= 0 or v2 <= 0:
        return math.nan
    cov = stats["pair_prod"][0, 1] / n - m1 * m2
    return float(cov / math.sqrt(v1 * v2) * math.sqrt(n))


def _collect_unfolded(spec, size, seed, count, e_lo, e_hi, table, center):
    """Extract and unfold the spectra of the first `count` draws."""
    width = draw_width(spec, size)
    bs = _blocks.block_size(width)
    out = []
    n0 = float(table.evaluate(np.array([center]))[0])
    block = 0
    while len(out) < count:
        rows = min(bs, count - len(out))
        omega = omega_block(spec, size, seed, block, rows, _blocks.STREAM_PRIMARY)
        diag, off = coefficients(spec, size, omega)
        draws, values = batched_eigenvalues_in(diag, off, e_lo, e_hi)
        xi = (table.evaluate(values) - n0) * size
        for r in range(rows):
            pts = np.sort(xi[draws == r])
            out.append(
                PointProcessSample(block * bs + r, center, (e_lo, e_hi), pts)
            )
        block += 1
    return out[:count]


def joint_independence_probe(
    spec: EnsembleSpec,
    energy_a: float,
    energy_b: float,
    size: int,
    samples: int,
    seed: int = 0,
    workers: int = 1,
    length_a: float = 1.0,
    length_b: float = 1.0,
    ids_table: IdsTable | None = None,
    ids_half_width: float = 0.75,
    ids_points: int = 161,
    ids_samples: int = 2048,
    kcap: int = 16,
) -> ProbeReport:
    """Joint count law at two separated energies vs the product of Poissons.

    Takes one unfolded interval of the given length at each energy, forms
    the joint count histogram over draws, and reports its total variation
    distance to Poisson(length_a) x Poisson(length_b), the marginal TVs, and
    corr_z for the pair. Joint Poisson convergence at distinct energies is
    the two-point refinement of single-energy Poisson statistics.
    """
    t0 = time.perf_counter()
    if energy_a == energy_b:
        raise ValueError("energies must be distinct")
    table = _ids_for(
        spec, size, energy_a, seed, workers, ids_table,
        ids_half_width, ids_points, ids_samples, extra_centers=(energy_b,),
        max_offset=max(length_a, length_b) / 2.0,
    )
    half_a = _unfolded_window_edges(table, size, energy_a, (-length_a / 2, length_a / 2))
    half_b = _unfolded_window_edges(table, size, energy_b, (-length_b / 2, length_b / 2))
    windows = ((float(half_a[0]), float(half_a[1])),
               (float(half_b[0]), float(half_b[1])))
    if windows[0][1] >= windows[1][0] and windows[1][1] >= windows[0][0]:
        raise ValueError("energy windows overlap; separate the energies")
    job = _WindowJob(
        spec, size, seed, samples, windows, kcap=kcap, joint_pair=(0, 1)
    )
    stats = _run_window_job(job, workers)
    ests = [
        Estimate("tv_joint", tv_to_poisson_product(stats["joint"], length_a, length_b)),
        Estimate("tv_first", tv_to_poisson(stats["hist"][0], length_a)),
        Estimate("tv_second", tv_to_poisson(stats["hist"][1], length_b)),
        Estimate("corr_z", _pair_corr_z(stats, samples)),
    ]
    for i, (tag, length) in enumerate((("first", length_a), ("second", length_b))):
        mean = stats["count_sum"][i] / samples
        var = max(stats["count_sq"][i] / samples - mean**2, 0.0)
        ests.append(
            Estimate(
                f"mean_{tag}",
                float(mean),
                normal_ci(float(mean), math.sqrt(var), samples),
            )
        )
    return ProbeReport(
        "joint_independence",
        {
            "kind": spec.kind,
            "law": _law_params(spec.law),
            "size": size,
            "energy_a": energy_a,
            "energy_b": energy_b,
            "length_a": length_a,
            "length_b": length_b,
            "windows": [list(windows[0]), list(windows[1])],
            "kcap": kcap,
        },
        ests,
        samples,
        seed,
        time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# nearest-neighbour spacings


@dataclass(frozen=True)
class _SpacingJob:
    spec: EnsembleSpec
    size: int
    seed: int
    total: int
    e_lo: float
    e_hi: float
    grid: tuple
    values: tuple


def _spacing_block(job: _SpacingJob, block: int):
    rows = _blocks.block_rows(job.total, draw_width(job.spec, job.size), block)
    omega = omega_block(
        job.spec, job.size, job.seed, block, rows, _blocks.STREAM_PRIMARY
    )
    diag, off = coefficients(job.spec, job.size, omega)
    draws, values = batched_eigenvalues_in(diag, off, job.e_lo, job.e_hi)
    unfolded = np.interp(values, job.grid, job.values) * job.size
    same = draws[1:] == draws[:-1]
    return np.diff(unfolded)[same]


def spacing_probe(
    spec: EnsembleSpec,
    energy: float,
    size: int,
    samples: int,
    seed: int = 0,
    workers: int = 1,
    half_width: float = 2.0,
    ids_table: IdsTable | None = None,
    ids_points: int = 301,
    ids_samples: int = 2048,
) -> tuple[ProbeReport, np.ndarray]:
    """Unfolded nearest-neighbour spacings pooled over draws.

    `half_width` is in unfolded units: the observation window is
    [E - h/L', E + h/L'] with h resolved through the inverse integrated
    density so it holds ~2*half_width levels on average. Reports the KS
    distance of the pooled spacings to the unit exponential (the Poisson
    spacing law) and the mean spacing with a normal CI; returns the spacing
    array for downstream plotting. A run with no spacings reports
    n_spacings = 0 and NaN statistics.
    """
    t0 = time.perf_counter()
    table = _ids_for(
        spec, size, energy, seed, workers, ids_table,
        0.75, ids_points, ids_samples, max_offset=half_width,
    )
    lo, hi = _unfolded_window_edges(table, size, energy, (-half_width, half_width))
    job = _SpacingJob(
        spec, size, seed, samples, float(lo), float(hi),
        tuple(table.energies.tolist()), tuple(table.values.tolist()),
    )
    blocks = _blocks.n_blocks(samples, draw_width(spec, size))
    parts = _blocks.map_blocks(partial(_spacing_block, job), blocks, workers)
    spacings = np.concatenate(parts) if parts else np.empty(0)
    m = spacings.size
    if m == 0:
        ests = [
            Estimate("n_spacings", 0.0),
            Estimate("mean_spacing", math.nan),
            Estimate("ks_exponential", math.nan),
        ]
    else:
        mean = math.fsum(spacings.tolist()) / m
        sd = float(np.std(spacings)) if m > 1 else math.nan
        ests = [
            Estimate("n_spacings", float(m)),
            Estimate("mean_spacing", mean, normal_ci(mean, sd, m)),
            Estimate("ks_exponential", ks_to_exponential(np.sort(spacings))),
        ]
    report = ProbeReport(
        "spacing",
        {
            "kind": spec.kind,
            "law": _law_params(spec.law),
            "size": size,
            "energy": energy,
            "half_width": half_width,
            "window": [float(lo), float(hi)],
        },
        ests,
        samples,
        seed,
        time.perf_counter() - t0,
    )
    return report, spacings


# ---------------------------------------------------------------------------
# quantum graph window counts


def qgraph_minami_probe(
    law,
    energy: float,
    widths,
    size: int,
    samples: int,
    seed: int = 0,
    workers: int = 1,
    width_scale: float | None = None,
) -> ProbeReport:
    """Occupancy and pair probabilities for the reduced quantum-graph matrix.

    Counts eigenvalues of the fixed-energy reduction R(E0) = A(E0) - W/c(E0)
    in [-eps', eps'] where eps' = width_scale * eps. The default width_scale
    sin(sqrt E0)/sqrt(E0) = 1/c(E0) converts vertex-eigenvalue windows to
    the graph-eigenvalue scale. Linear/quadratic scaling of p1/p2 in eps is
    the graph analogue of the single/pair window bounds.
    """
    t0 = time.perf_counter()
    widths = sorted(float(w) for w in widths)
    if not widths or widths[0] <= 0:
        raise ValueError("need positive window half-widths")
    family = IntervalGraphFamily()
    if width_scale is None:
        root = math.sqrt(energy)
        width_scale = math.sin(root) / root
    lam = family.lambda_at(energy)  # -c(E0)
    mu = family.mu_at(energy)
    spec = EnsembleSpec("qgraph", law=law)
    # diag of R(E0) is (omega - mu)/lam on top of the -1 couplings
    windows = tuple(
        (-w * width_scale, w * width_scale) for w in widths
    )
    job = _WindowJob(
        spec,
        size,
        seed,
        samples,
        windows,
        post_affine=(-mu / lam, 1.0 / lam),
    )
    stats = _run_window_job(job, workers)
    p1 = stats["occupancy"] / samples
    p2 = np.array(
        [samples - int(stats["hist"][i, 0] + stats["hist"][i, 1])
         for i in range(len(widths))]
    ) / samples
    ests = []
    for i, w in enumerate(widths):
        ests.append(
            Estimate(
                f"p1_hat[{w:.6g}]",
                float(p1[i]),
                wilson_ci(int(stats["occupancy"][i]), samples),
            )
        )
        ests.append(
            Estimate(
                f"p2_hat[{w:.6g}]",
                float(p2[i]),
                wilson_ci(int(round(p2[i] * samples)), samples),
            )
        )
    s1, se1, _ = log_slope(widths, p1)
    s2, se2, _ = log_slope(widths, p2)
    ests.append(Estimate("slope_k1", s1, _slope_ci(s1, se1)))
    ests.append(Estimate("slope_k2", s2, _slope_ci(s2, se2)))
    scaled = np.asarray(widths) * width_scale
    ests.append(Estimate("c1_hat", float(np.max(p1 / (scaled * size)))))
    return ProbeReport(
        "qgraph_minami",
        {
            "law": _law_params(law),
            "size": size,
            "energy": energy,
            "widths": widths,
            "width_scale": width_scale,
        },
        ests,
        samples,
        seed,
        time.perf_counter() - t0,
    )
