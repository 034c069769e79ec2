"""Transfer matrices, trace classification, and Lyapunov exponents.

One-step matrices propagate eigenvector pairs (u(n+1), u(n)); the sign-mirror
ensemble has a closed-form two-step matrix per omega pair with determinant 1.
Trace classification follows the SL(2, R) trichotomy: |tr| > 2 hyperbolic,
|tr| = 2 parabolic, |tr| < 2 elliptic.

Lyapunov exponents are estimated with per-step renormalization over
independent replicas; the confidence interval comes from the replica spread
and the reported rate is log-growth per lattice step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _blocks
from .operators import EnsembleSpec, FiniteProfile, TridiagonalOperator

_STREAM_LYAPUNOV = 5
_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True, eq=False)
class TransferStep:
    """One 2x2 propagation step u(n+1) = (matrix @ (u(n), u(n-1)))[0]."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 2):
            raise ValueError("transfer step must be 2x2")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> float:
        m = self.matrix
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @property
    def trace(self) -> float:
        return float(self.matrix[0, 0] + self.matrix[1, 1])


def one_step(
    potential: float, energy: float, a_left: float = 1.0, a_right: float = 1.0
) -> TransferStep:
    """Step for -a_right u(n+1) - a_left u(n-1) + V u(n) = E u(n).

    Matrix [[(V - E)/a_right, -a_left/a_right], [1, 0]]; det = a_left/a_right.
    """
    if a_right == 0.0:
        raise ValueError("right coupling must be nonzero")
    return TransferStep(
        [[(potential - energy) / a_right, -a_left / a_right], [1.0, 0.0]]
    )


def operator_steps(op: TridiagonalOperator, energy: float) -> np.ndarray:
    """(L, 2, 2) steps reproducing the eigenvector recursion of `op`.

    The assembled box operator acts as a(n+1)u(n+1) + a(n)u(n-1) + V(n)u(n),
    so step n is one_step(-V(n), -energy, a(n), a(n+1)) with the out-of-box
    couplings a(1) = a(L+1) = 1 by convention (they only multiply zeros in
    the Dirichlet recursion).
    """
    size = op.size
    a = np.ones(size + 1)
    a[1:size] = op.offdiag
    mats = np.zeros((size, 2, 2))
    mats[:, 0, 0] = (energy - op.diag) / a[1:]
    mats[:, 0, 1] = -a[:-1] / a[1:]
    mats[:, 1, 0] = 1.0
    return mats


def propagate(
    op: TridiagonalOperator, energy: float, u1: float = 1.0, renormalize: bool = True
) -> tuple[np.ndarray, float]:
    """Run the recursion from (u(1), u(0)) = (u1, 0) through all L steps.

    Returns (states, log_norm): states[n] is the direction of
    (u(n+1), u(n)) after step n (unit vectors when renormalizing), and
    log_norm accumulates the stripped growth so the true state is
    exp(log_norm) * states[-1].
    """
    mats = operator_steps(op, energy)
    v = np.array([u1, 0.0])
    log_norm = 0.0
    states = np.zeros((op.size, 2))
    for n in range(op.size):
        v = mats[n] @ v
        if renormalize:
            nrm = float(np.hypot(v[0], v[1]))
            if nrm == 0.0:
                raise ValueError("trajectory vanished; not an eigen-recursion")
            v = v / nrm
            log_norm += math.log(nrm)
        states[n] = v
    return states, log_norm


def dimer_two_step(omega: float, energy: float) -> TransferStep:
    """Two-step matrix across one sign-mirrored pair (-omega then +omega).

    [[1 + omega^2 - E^2, omega - E], [omega + E, 1]]; det = 1 exactly.
    """
    w, e = float(omega), float(energy)
    return TransferStep([[1.0 + w * w - e * e, w - e], [w + e, 1.0]])


def classify_trace(trace: float) -> str:
    t = abs(float(trace))
    if t > 2.0:
        return "hyperbolic"
    if t == 2.0:
        return "parabolic"
    return "elliptic"


@dataclass(frozen=True)
class EllipticityReport:
    """Traces and trace-classes of the marker matrices A, A^2, B, B^2, C_delta.

    A, B, C_delta are the sign-mirrored two-step matrices at omega = 0, 1,
    delta, here constructed numerically as negated products of one-step
    matrices. `trace_formulas` hold the closed-form polynomials
    tr A = 2 - E^2, tr A^2 = (2 - E^2)^2 - 2, tr B = 3 - E^2,
    tr B^2 = (3 - E^2)^2 - 2, tr C_delta = 2 + delta^2 - E^2;
    `max_formula_error` is the worst disagreement, including the entrywise
    gap between the products and the closed-form two-step matrices.
    """

    energy: float
    delta: float
    traces: dict
    trace_formulas: dict
    max_formula_error: float
    classes: dict


def ellipticity_report(energy: float, delta: float = 0.5) -> EllipticityReport:
    e = float(energy)
    d = float(delta)
    if not 0.0 < d < 1.0:
        raise ValueError("need delta in (0, 1)")

    def pair(w):
        # -(T(+w) @ T(-w)): one step across -w then +w, negated so the
        # trace carries the 2 - E^2 sign convention.
        return -(one_step(w, e).matrix @ one_step(-w, e).matrix)

    prods = {"A": pair(0.0), "B": pair(1.0), "C_delta": pair(d)}
    entry_err = max(
        float(np.max(np.abs(prods[k] - dimer_two_step(w, e).matrix)))
        for k, w in (("A", 0.0), ("B", 1.0), ("C_delta", d))
    )
    a, b, c = prods["A"], prods["B"], prods["C_delta"]
    traces = {
        "A": float(np.trace(a)),
        "A2": float(np.trace(a @ a)),
        "B": float(np.trace(b)),
        "B2": float(np.trace(b @ b)),
        "C_delta": float(np.trace(c)),
    }
    formulas = {
        "A": 2.0 - e * e,
        "A2": (2.0 - e * e) ** 2 - 2.0,
        "B": 3.0 - e * e,
        "B2": (3.0 - e * e) ** 2 - 2.0,
        "C_delta": 2.0 + d * d - e * e,
    }
    err = max(abs(traces[k] - formulas[k]) for k in traces)
    classes = {k: classify_trace(v) for k, v in traces.items()}
    return EllipticityReport(e, d, traces, formulas, max(err, entry_err), classes)


# ---------------------------------------------------------------------------
# Lyapunov exponents


@dataclass(frozen=True)
class LyapunovEstimate:
    """Estimated log-growth rate per lattice step with replica-based CI."""

    gamma: float
    stderr: float
    ci99: tuple[float, float]
    steps: int
    samples: int
    sites_per_step: int
    seed: int


def lyapunov_stream(
    step_fn,
    steps: int,
    samples: int = 64,
    seed: int = 0,
    sites_per_step: int = 1,
) -> LyapunovEstimate:
    """Lyapunov exponent of a product of random 2x2 matrices.

    step_fn(rng, count) must return a (count, 2, 2) array holding one matrix
    per replica for the current step. Replicas evolve independently with
    per-step renormalization; gamma is averaged per lattice step
    (steps * sites_per_step sites) and the replica mean is merged with
    math.fsum. Requires steps >= 1000.
    """
    if steps < 1000:
        raise ValueError("need steps >= 1000 for a stable estimate")
    if samples < 2:
        raise ValueError("need samples >= 2 for a spread-based CI")
    rng = _blocks.block_rng(seed, 0, stream=_STREAM_LYAPUNOV)
    v0 = np.ones(samples)
    v1 = np.zeros(samples)
    acc = np.zeros(samples)
    for _ in range(steps):
        m = np.asarray(step_fn(rng, samples), dtype=np.float64)
        w0 = m[:, 0, 0] * v0 + m[:, 0, 1] * v1
        w1 = m[:, 1, 0] * v0 + m[:, 1, 1] * v1
        nrm = np.hypot(w0, w1)
        if np.any(nrm == 0.0):
            raise ValueError("replica vanished; singular step matrix")
        acc += np.log(nrm)
        v0, v1 = w0 / nrm, w1 / nrm
    per = acc / (steps * sites_per_step)
    gamma = math.fsum(per) / samples
    sd = float(np.std(per, ddof=1))
    se = sd / math.sqrt(samples)
    return LyapunovEstimate(
        gamma, se, (gamma - _Z99 * se, gamma + _Z99 * se), steps, samples,
        sites_per_step, seed,
    )


def lyapunov(
    spec: EnsembleSpec,
    energy: float,
    steps: int = 10000,
    samples: int = 64,
    seed: int = 0,
) -> LyapunovEstimate:
    """Lyapunov exponent of the given ensemble at one energy.

    Supported kinds: dimer_sign (two-step matrices, 2 sites per step),
    anderson, hopping, and truncated alloy (one-step matrices).
    """
    e = float(energy)
    law = spec.law

    if spec.kind == "dimer_sign":

        def step(rng, n):
            w = law.transform(rng.random(n))
            m = np.zeros((n, 2, 2))
            m[:, 0, 0] = 1.0 + w * w - e * e
            m[:, 0, 1] = w - e
            m[:, 1, 0] = w + e
            m[:, 1, 1] = 1.0
            return m

        return lyapunov_stream(step, steps, samples, seed, sites_per_step=2)

    if spec.kind == "anderson":

        def step(rng, n):
            v = law.transform(rng.random(n))
            m = np.zeros((n, 2, 2))
            m[:, 0, 0] = v - e
            m[:, 0, 1] = -1.0
            m[:, 1, 0] = 1.0
            return m

        return lyapunov_stream(step, steps, samples, seed)

    if spec.kind == "hopping":
        state = {"prev": None}

        def step(rng, n):
            if state["prev"] is None:
                state["prev"] = law.transform(rng.random(n))
            a_next = law.transform(rng.random(n))
            m = np.zeros((n, 2, 2))
            m[:, 0, 0] = e / a_next
            m[:, 0, 1] = -state["prev"] / a_next
            m[:, 1, 0] = 1.0
            state["prev"] = a_next
            return m

        return lyapunov_stream(step, steps, samples, seed)

    if spec.kind == "alloy":
        if not isinstance(spec.profile, FiniteProfile):
            raise ValueError("alloy profile has unbounded support; truncate it first")
        d = spec.profile.materialize(spec.margin)
        width = d.size
        state = {"buf": None}

        def step(rng, n):
            if state["buf"] is None:
                state["buf"] = law.transform(rng.random((n, width)))
            buf = state["buf"]
            v = buf @ d
            m = np.zeros((n, 2, 2))
            m[:, 0, 0] = v - e
            m[:, 0, 1] = -1.0
            m[:, 1, 0] = 1.0
            buf[:, :-1] = buf[:, 1:]
            buf[:, -1] = law.transform(rng.random(n))
            return m

        return lyapunov_stream(step, steps, samples, seed)

    raise NotImplementedError(f"lyapunov not implemented for kind {spec.kind!r}")
