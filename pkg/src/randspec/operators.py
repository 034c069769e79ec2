"""Random tridiagonal operators on boxes {1..L} with Dirichlet restriction.

Ensembles covered:

* ``hopping``    H u(n) = a(n+1) u(n+1) + a(n) u(n-1), i.i.d. couplings;
* ``anderson``   H = Delta_a + V with a == 1 and i.i.d. diagonal V;
* ``alloy``      V(m) = sum_n d(n) omega_{n+m} with a single-site profile d
                 and i.i.d. omega living on the enlarged box {1-S .. L+S};
* ``dimer_sign`` V(2i) = omega_i, V(2i+1) = -omega_i (sign-mirrored pairs);
* ``qgraph``     -Delta + diag(omega), the vertex reduction of a metric-graph
                 Laplacian with delta couplings omega >= 0.

The Dirichlet restriction to {1..L} keeps couplings a(2..L) and drops the
boundary couplings, so the box operator is the L x L tridiagonal matrix with
diagonal V(1..L) and off-diagonal a(2..L). Site indices in public APIs are
1-based throughout.

Draws are reproducible bit for bit from (seed, index) via a block-structured
counter RNG; see _blocks.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import _blocks

KINDS = ("hopping", "anderson", "alloy", "dimer_sign", "qgraph")


class DomainError(ValueError):
    """Raised when an energy lies outside a spectral family's domain."""


# ---------------------------------------------------------------------------
# single-site laws


@dataclass(frozen=True)
class UniformLaw:
    """Uniform law on [lo, hi]."""

    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("law endpoints must be finite")
        if self.hi < self.lo:
            raise ValueError("need lo <= hi")

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def density_bound(self) -> float:
        if self.hi == self.lo:
            return math.inf
        return 1.0 / (self.hi - self.lo)

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on [0, 1) to law samples (inverse CDF)."""
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=np.float64)


@dataclass(frozen=True)
class PiecewiseLinearLaw:
    """Law whose density is piecewise linear between knots.

    `weights` are (unnormalized) density values at the knots; the density
    interpolates linearly on each segment and is normalized internally.
    """

    knots: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if k.ndim != 1 or k.size < 2 or w.shape != k.shape:
            raise ValueError("need matching knot/weight arrays, >= 2 knots")
        if not np.all(np.diff(k) > 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(k)):
            raise ValueError("weights must be finite and nonnegative")
        mass = float(np.sum((w[:-1] + w[1:]) / 2.0 * np.diff(k)))
        if mass <= 0:
            raise ValueError("density must have positive mass")

    @classmethod
    def from_csv(cls, path) -> "PiecewiseLinearLaw":
        """Read (x, density) rows from a two-column CSV file."""
        xs, ws = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                xs.append(float(row[0]))
                ws.append(float(row[1]))
        return cls(tuple(xs), tuple(ws))

    def _tables(self):
        k = np.asarray(self.knots, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        seg_mass = (w[:-1] + w[1:]) / 2.0 * np.diff(k)
        total = seg_mass.sum()
        dens = w / total
        cdf = np.concatenate([[0.0], np.cumsum(seg_mass / total)])
        cdf[-1] = 1.0
        return k, dens, cdf

    @property
    def support(self) -> tuple[float, float]:
        return (self.knots[0], self.knots[-1])

    @property
    def density_bound(self) -> float:
        _, dens, _ = self._tables()
        return float(dens.max())

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sampling; exact on each linear segment."""
        u = np.asarray(u, dtype=np.float64)
        k, dens, cdf = self._tables()
        seg = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(k) - 2)
        q = u - cdf[seg]
        dx = np.diff(k)[seg]
        f0 = dens[seg]
        slope = (dens[seg + 1] - dens[seg]) / dx
        # solve (slope/2) t^2 + f0 t = q on each segment
        disc = np.sqrt(np.maximum(f0 * f0 + 2.0 * slope * q, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lin = np.where(slope != 0.0, (disc - f0) / slope, 0.0)
            t_flat = np.where(f0 > 0.0, q / f0, 0.0)
        t = np.where(slope != 0.0, t_lin, t_flat)
        return k[seg] + np.clip(t, 0.0, dx)


# ---------------------------------------------------------------------------
# alloy single-site profiles


@dataclass(frozen=True)
class FiniteProfile:
    """Compactly supported profile d(n), values at offsets -r..r."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) % 2 != 1:
            raise ValueError("profile needs values at offsets -r..r (odd length)")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("profile values must be finite")

    @property
    def radius(self) -> int:
        return (len(self.values) - 1) // 2

    def materialize(self, radius: int | None = None) -> np.ndarray:
        """Values at offsets -radius..radius, zero-padded beyond support."""
        if radius is None or radius == self.radius:
            return np.asarray(self.values, dtype=np.float64)
        if radius < self.radius:
            raise ValueError("radius smaller than support; truncate first")
        pad = radius - self.radius
        return np.pad(np.asarray(self.values, dtype=np.float64), pad)

    def truncate(self, radius: int) -> "FiniteProfile":
        if radius >= self.radius:
            return self
        r = self.radius
        return FiniteProfile(self.values[r - radius : r + radius + 1])

    def tail_abs_sum(self, cutoff: int) -> float:
        """sum of |d(n)| over |n| > cutoff."""
        r = self.radius
        if cutoff >= r:
            return 0.0
        vals = np.abs(np.asarray(self.values, dtype=np.float64))
        keep = np.abs(np.arange(-r, r + 1)) > cutoff
        return float(vals[keep].sum())

    def single_signed(self) -> bool:
        nz = [v for v in self.values if v != 0.0]
        return bool(nz) and (all(v > 0 for v in nz) or all(v < 0 for v in nz))


@dataclass(frozen=True)
class GeometricProfile:
    """Infinite-support profile d(n) = amplitude * exp(-rate * |n|)."""

    rate: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not (self.rate > 0):
            raise ValueError("profile must decay: need rate > 0")
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")

    @property
    def radius(self) -> float:
        return math.inf

    def value(self, n: int) -> float:
        return self.amplitude * math.exp(-self.rate * abs(n))

    def materialize(self, radius: int) -> np.ndarray:
        n = np.arange(-radius, radius + 1)
        return self.amplitude * np.exp(-self.rate * np.abs(n))

    def truncate(self, radius: int) -> FiniteProfile:
        return FiniteProfile(tuple(self.materialize(radius)))

    def tail_abs_sum(self, cutoff: int) -> float:
        """sum of |d(n)| over |n| > cutoff (geometric series, exact)."""
        q = math.exp(-self.rate)
        return 2.0 * abs(self.amplitude) * q ** (cutoff + 1) / (1.0 - q)

    def single_signed(self) -> bool:
        return self.amplitude != 0.0


# ---------------------------------------------------------------------------
# spectral families V_omega(E) = (V_omega - mu_E) / lambda_E


@dataclass(frozen=True)
class IdentityFamily:
    """lambda == 1, mu(E) = E: the plain energy shift V - E."""

    name = "identity"

    def lambda_at(self, energy: float) -> float:
        return 1.0

    def mu_at(self, energy: float) -> float:
        return float(energy)


@dataclass(frozen=True)
class AffineFamily:
    """Constant lambda and mu, independent of the energy."""

    lam: float
    mu: float
    name = "affine"

    def __post_init__(self):
        if self.lam == 0:
            raise ValueError("lambda must be nonzero")

    def lambda_at(self, energy: float) -> float:
        return self.lam

    def mu_at(self, energy: float) -> float:
        return self.mu


@dataclass(frozen=True)
class IntervalGraphFamily:
    """Vertex reduction of the continuum Laplacian on unit-interval edges.

    lambda_E = -sqrt(E)/sin(sqrt(E)), mu_E = sqrt(E) cot(sqrt(E)), so that
    (omega - mu_E)/lambda_E = cos sqrt(E) - (sin sqrt(E)/sqrt(E)) omega.
    Domain: E > 0 away from the excluded set {(k pi)^2 : k >= 1} where
    sin sqrt(E) vanishes.
    """

    pole_margin: float = 1e-6 * math.pi**2
    name = "interval_graph"

    def _root(self, energy: float) -> float:
        energy = float(energy)
        if not energy > 0:
            raise DomainError("energy must be positive")
        s = math.sqrt(energy)
        k = max(1, round(s / math.pi))
        for kk in (k - 1, k, k + 1):
            if kk >= 1 and abs(energy - (kk * math.pi) ** 2) < self.pole_margin:
                raise DomainError(
                    "energy within excluded band around {(k pi)^2: k >= 1}"
                )
        return s

    def lambda_at(self, energy: float) -> float:
        s = self._root(energy)
        return -s / math.sin(s)

    def mu_at(self, energy: float) -> float:
        s = self._root(energy)
        return s * math.cos(s) / math.sin(s)


FAMILIES = {
    "identity": IdentityFamily,
    "affine": AffineFamily,
    "interval_graph": IntervalGraphFamily,
}


# ---------------------------------------------------------------------------
# the tridiagonal box operator


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    """Symmetric tridiagonal operator on {1..L}: diag V(1..L), offdiag a(2..L)."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.diag, dtype=np.float64)
        a = np.ascontiguousarray(self.offdiag, dtype=np.float64)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("diagonal must be a nonempty vector")
        if a.shape != (d.size - 1,):
            raise ValueError("offdiag length must be size - 1")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(a))):
            raise ValueError("operator entries must be finite")
        d.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", a)

    @property
    def size(self) -> int:
        return self.diag.size

    def gershgorin(self) -> tuple[float, float]:
        """Interval certainly containing the spectrum (Dirichlet box)."""
        r = np.zeros(self.size)
        absa = np.abs(self.offdiag)
        r[1:] += absa
        r[:-1] += absa
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))

    def norm_bound(self) -> float:
        lo, hi = self.gershgorin()
        return max(abs(lo), abs(hi), np.finfo(float).tiny)

    def to_dense(self) -> np.ndarray:
        h = np.diag(self.diag)
        idx = np.arange(self.size - 1)
        h[idx, idx + 1] = self.offdiag
        h[idx + 1, idx] = self.offdiag
        return h

    def sub_box(self, i: int, j: int) -> "TridiagonalOperator":
        """Dirichlet restriction to sites {i..j}, 1-based inclusive."""
        if not 1 <= i <= j <= self.size:
            raise ValueError("need 1 <= i <= j <= L")
        return TridiagonalOperator(self.diag[i - 1 : j], self.offdiag[i - 1 : j - 1])

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out


# ---------------------------------------------------------------------------
# ensemble specification and draws


def _default_law(kind: str) -> UniformLaw:
    return UniformLaw(1.0, 2.0) if kind == "hopping" else UniformLaw(0.0, 1.0)


@dataclass(frozen=True)
class EnsembleSpec:
    """Which ensemble to draw from, plus its law/profile/spectral family."""

    kind: str
    law: UniformLaw | PiecewiseLinearLaw | None = None
    profile: FiniteProfile | GeometricProfile | None = None
    margin: int = 0
    family: object | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.law is None:
            object.__setattr__(self, "law", _default_law(self.kind))
        if self.family is None:
            fam = IntervalGraphFamily() if self.kind == "qgraph" else IdentityFamily()
            object.__setattr__(self, "family", fam)
        lo, hi = self.law.support
        if self.kind == "hopping" and not (1.0 <= lo and hi <= 2.0):
            raise ValueError("hopping law must have support within [1, 2]")
        if self.kind == "qgraph" and lo < 0.0:
            raise ValueError("qgraph coupling law must be supported on [0, inf)")
        if self.kind == "alloy":
            if self.profile is None:
                raise ValueError("alloy ensemble requires a profile")
            if self.margin < 1:
                raise ValueError("alloy ensemble requires margin >= 1")
            if (
                isinstance(self.profile, FiniteProfile)
                and self.profile.radius > self.margin
            ):
                raise ValueError("margin must cover the profile support radius")
        elif self.profile is not None:
            raise ValueError("profile is only meaningful for the alloy ensemble")


@dataclass(frozen=True, eq=False)
class EnsembleDraw:
    """One realization: raw variables, derived coefficients, and provenance."""

    omega: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray
    seed: int
    index: int


def draw_width(spec: EnsembleSpec, size: int) -> int:
    """Number of scalar random variables behind one draw on {1..size}."""
    if size < 1:
        raise ValueError("need size >= 1")
    if spec.kind == "alloy":
        return size + 2 * spec.margin
    if spec.kind == "dimer_sign":
        return size // 2 + 1
    return size


def coefficients(
    spec: EnsembleSpec, size: int, omega: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Map law-transformed draws (batch, width) to (diag, offdiag) arrays.

    diag has shape (batch, size). offdiag is (size - 1,) when the couplings
    are deterministic and (batch, size - 1) for the hopping ensemble.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 2 or omega.shape[1] != draw_width(spec, size):
        raise ValueError("omega must have shape (batch, draw_width)")
    batch = omega.shape[0]
    if spec.kind == "hopping":
        return np.zeros((batch, size)), omega[:, 1:]
    if spec.kind == "anderson":
        return omega.copy(), np.ones(size - 1)
    if spec.kind == "qgraph":
        return omega.copy(), -np.ones(size - 1)
    if spec.kind == "dimer_sign":
        n = np.arange(1, size + 1)
        sign = np.where(n % 2 == 0, 1.0, -1.0)
        return sign * omega[:, n // 2], np.ones(size - 1)
    # alloy
    if not isinstance(spec.profile, FiniteProfile):
        raise ValueError("alloy profile has unbounded support; truncate it first")
    s = spec.margin
    d = spec.profile.materialize(s)
    diag = np.zeros((batch, size))
    for k in range(2 * s + 1):
        if d[k] != 0.0:
            diag += d[k] * omega[:, k : k + size]
    return diag, np.ones(size - 1)


def omega_block(
    spec: EnsembleSpec,
    size: int,
    seed: int,
    block: int,
    rows: int | None = None,
    stream: int = _blocks.STREAM_PRIMARY,
) -> np.ndarray:
    """Law-transformed draw rows for one RNG block."""
    width = draw_width(spec, size)
    if rows is None:
        rows = _blocks.block_size(width)
    u = _blocks.uniform_block(seed, block, rows, width, stream)
    return spec.law.transform(u)


def make_draw(
    spec: EnsembleSpec,
    size: int,
    seed: int,
    index: int,
    stream: int = _blocks.STREAM_PRIMARY,
) -> EnsembleDraw:
    """Reproduce draw `index` of the run keyed by `seed`, bit for bit."""
    if index < 0:
        raise ValueError("index must be nonnegative")
    width = draw_width(spec, size)
    bs = _blocks.block_size(width)
    block, row = divmod(index, bs)
    omega = omega_block(spec, size, seed, block, rows=row + 1, stream=stream)[row]
    diag, off = coefficients(spec, size, omega[None, :])
    off1 = off[0] if off.ndim == 2 else off
    for arr in (omega, diag, off1):
        arr.flags.writeable = False
    return EnsembleDraw(omega, diag[0], off1, seed, index)


def assemble(spec: EnsembleSpec, size: int, draw: EnsembleDraw) -> TridiagonalOperator:
    """Dirichlet box operator on {1..size} for one draw."""
    if draw.diag.shape != (size,):
        raise ValueError("draw was made for a different box size")
    return TridiagonalOperator(draw.diag, draw.offdiag)


def truncate_alloy(spec: EnsembleSpec, size: int, decay_factor: float = 3.0) -> EnsembleSpec:
    """Truncate the alloy profile to radius S = ceil(decay_factor * log size).

    For an exponentially decaying profile the discarded operator differs from
    the full one by at most 2 * sum_{|n|>S} |d(n)| in operator norm (the
    sup-norm of the dropped potential); `profile.tail_abs_sum(S)` computes
    half of that bound's series. A compactly supported profile with radius
    <= S is returned unchanged.
    """
    if spec.kind != "alloy":
        raise ValueError("truncate_alloy applies to the alloy ensemble")
    if size < 2:
        raise ValueError("need size >= 2")
    cutoff = math.ceil(decay_factor * math.log(size))
    prof = spec.profile
    if isinstance(prof, FiniteProfile) and prof.radius <= cutoff:
        if spec.margin >= prof.radius:
            return spec
        return dataclasses.replace(spec, margin=prof.radius)
    new_prof = prof.truncate(cutoff)
    return dataclasses.replace(spec, profile=new_prof, margin=cutoff)


def energy_family_potential(
    spec: EnsembleSpec, energy: float, draw: EnsembleDraw
) -> TridiagonalOperator:
    """Operator with diagonal (V - mu_E) / lambda_E, couplings unchanged."""
    lam = spec.family.lambda_at(energy)
    mu = spec.family.mu_at(energy)
    return TridiagonalOperator((draw.diag - mu) / lam, draw.offdiag)
