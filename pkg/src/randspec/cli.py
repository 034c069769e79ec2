"""Experiment runner: INI config in, deterministic reports out.

Config grammar (INI):

    [experiment]
    seed = 12345            ; mandatory master seed
    out = results           ; output directory (overridden by --out)
    workers = 4             ; optional; overridden by --workers / env

    [probe:some_name]       ; one section per probe invocation
    type = wegner           ; one of the registered probe types
    kind = anderson         ; ensemble kind (qgraph-minami: law only)
    law = uniform:0,1       ; optional; defaults per kind
    size = 100
    samples = 100000
    energy = 0.0
    widths = 1e-4,1e-3,1e-2 ; width-scan probes
    check_slope_min = 0.9   ; optional bounds on named estimates,
    check_slope_max = 1.1   ; evaluated under --check

Each probe writes <name>.json (canonical apart from runtime_s) plus
plot-ready CSVs, and one combined summary.csv. Per-probe seeds are derived
from the master seed and the probe name, so adding or reordering sections
never changes another probe's numbers. Exit codes: 0 all probes ran (checks
pass or not requested), 1 a --check bound failed, 2 a probe raised.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import importlib.resources
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import probes, transfer
from .ids import estimate_ids
from .operators import (
    EnsembleSpec,
    FiniteProfile,
    GeometricProfile,
    KINDS,
    PiecewiseLinearLaw,
    UniformLaw,
)

ENV_WORKERS = "RANDSPEC_WORKERS"

# probe registry: type -> (runner, claim tested, parameter hint)
REGISTRY = {
    "wegner": (
        "single-window occupancy P[count >= 1] scales linearly in the "
        "window width (slope 1 log-log), with constant <= C |J| L",
        "energy, widths, size, samples",
    ),
    "minami": (
        "excess E[max(count-1, 0)] scales quadratically in the width for "
        "independent potentials (slope 2); couplings-only disorder at a "
        "band edge keeps slope >= 3/2",
        "energy, widths, size, samples",
    ),
    "decorrelation": (
        "windows at two energies with |E| != |E'| are occupied jointly at "
        "the product rate (independence ratio -> 1); mirrored energies in "
        "the pure hopping model make the events identical (control)",
        "energy_a, energy_b, size, samples, half_width, disjoint",
    ),
    "level_statistics": (
        "unfolded eigenvalue counts near a localized energy converge to a "
        "Poisson process: per-interval counts are Poisson(|I|) in total "
        "variation and disjoint intervals decorrelate",
        "energy, intervals, size, samples, ids_*",
    ),
    "joint_independence": (
        "count processes at two distinct energies converge to independent "
        "Poisson processes: joint pmf matches the product law",
        "energy_a, energy_b, length_a, length_b, size, samples, ids_*",
    ),
    "spacing": (
        "unfolded nearest-neighbour spacings L(N(E_{j+1}) - N(E_j)) are "
        "asymptotically exponential(1): KS to e^{-x} small, mean 1",
        "energy, half_width, size, samples, ids_*",
    ),
    "qgraph-minami": (
        "window counts of the reduced quantum-graph operator at fixed "
        "energy scale like (width L)^k for k = 1, 2 eigenvalues, with the "
        "vertex-coupling scale factor sin(sqrt E)/sqrt(E)",
        "energy, widths, size, samples, width_scale",
    ),
}


class ConfigError(Exception):
    """Config file problem, annotated with section/field."""


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


# ---------------------------------------------------------------------------
# config parsing


def _parse_law(text: str):
    head, _, rest = text.partition(":")
    if head == "uniform":
        lo, hi = (float(t) for t in rest.split(","))
        return UniformLaw(lo, hi)
    if head == "piecewise":
        return PiecewiseLinearLaw.from_csv(rest)
    raise ConfigError(f"unknown law {text!r} (use uniform:lo,hi or piecewise:FILE)")


def _parse_profile(text: str):
    head, _, rest = text.partition(":")
    if head == "finite":
        return FiniteProfile(tuple(float(t) for t in rest.split(",")))
    if head == "geometric":
        amp, rate = (float(t) for t in rest.split(","))
        return GeometricProfile(rate, amp)
    raise ConfigError(
        f"unknown profile {text!r} (use finite:v-r,...,vr or geometric:amp,rate)"
    )


class _Section:
    """One probe section with typed, error-annotated accessors."""

    def __init__(self, name: str, options: dict):
        self.name = name
        self.options = dict(options)
        self.used = set()

    def _raw(self, key, default=None, required=False):
        self.used.add(key)
        if key in self.options:
            return self.options[key]
        if required:
            raise ConfigError(f"[probe:{self.name}] missing required field {key!r}")
        return default

    def get(self, key, default=None, required=False):
        return self._raw(key, default, required)

    def get_int(self, key, default=None, required=False):
        v = self._raw(key, default, required)
        try:
            return v if v is None else int(v)
        except ValueError as exc:
            raise ConfigError(f"[probe:{self.name}] {key} = {v!r}: not an integer") from exc

    def get_float(self, key, default=None, required=False):
        v = self._raw(key, default, required)
        try:
            return v if v is None else float(v)
        except ValueError as exc:
            raise ConfigError(f"[probe:{self.name}] {key} = {v!r}: not a number") from exc

    def get_floats(self, key, required=False):
        v = self._raw(key, None, required)
        if v is None:
            return None
        try:
            return [float(t) for t in str(v).split(",") if t.strip()]
        except ValueError as exc:
            raise ConfigError(f"[probe:{self.name}] {key} = {v!r}: not a number list") from exc

    def get_bool(self, key, default=False):
        v = self._raw(key, None)
        if v is None:
            return default
        if str(v).lower() in ("1", "true", "yes", "on"):
            return True
        if str(v).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[probe:{self.name}] {key} = {v!r}: not a boolean")

    def get_intervals(self, key, default):
        v = self._raw(key, None)
        if v is None:
            return default
        out = []
        for part in str(v).split(","):
            a, sep, b = part.partition(":")
            if not sep:
                raise ConfigError(
                    f"[probe:{self.name}] {key}: expected a:b pairs, got {part!r}"
                )
            out.append((float(a), float(b)))
        return out

    def checks(self):
        """(estimate_name, 'min'|'max', bound) triples from check_* keys."""
        out = []
        for key, val in self.options.items():
            if not key.startswith("check_"):
                continue
            self.used.add(key)
            rest = key[len("check_"):]
            if rest.endswith("_min"):
                which, est = "min", rest[:-4]
            elif rest.endswith("_max"):
                which, est = "max", rest[:-4]
            else:
                raise ConfigError(
                    f"[probe:{self.name}] {key}: check keys end in _min or _max"
                )
            try:
                out.append((est, which, float(val)))
            except ValueError as exc:
                raise ConfigError(f"[probe:{self.name}] {key} = {val!r}") from exc
        return out

    def warn_unused(self):
        extra = set(self.options) - self.used
        if extra:
            raise ConfigError(
                f"[probe:{self.name}] unknown fields: {', '.join(sorted(extra))}"
            )


def _ensemble(sec: _Section) -> EnsembleSpec:
    kind = sec.get("kind", required=True)
    if kind not in KINDS:
        raise ConfigError(f"[probe:{sec.name}] unknown kind {kind!r}")
    law = sec.get("law")
    profile = sec.get("profile")
    return EnsembleSpec(
        kind,
        law=_parse_law(law) if law else None,
        profile=_parse_profile(profile) if profile else None,
        margin=sec.get_int("margin", 0),
    )


def load_config(path: str):
    """Parse an experiment config; returns (master_seed, out_dir, workers,
    [probe sections])."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # estimate names in check keys are case-sensitive
    if path == "paper-suite":
        text = (
            importlib.resources.files("randspec")
            .joinpath("configs/paper_suite.cfg")
            .read_text()
        )
        parser.read_string(text, source="paper-suite")
    else:
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path!r}")
    if "experiment" not in parser:
        raise ConfigError("config needs an [experiment] section")
    exp = parser["experiment"]
    if "seed" not in exp:
        raise ConfigError("[experiment] needs a seed")
    try:
        seed = int(exp["seed"])
    except ValueError as exc:
        raise ConfigError(f"[experiment] seed = {exp['seed']!r}: not an integer") from exc
    out_dir = exp.get("out", "results")
    workers = int(exp["workers"]) if "workers" in exp else None
    sections = []
    for sec_name in parser.sections():
        if sec_name == "experiment":
            continue
        if not sec_name.startswith("probe:"):
            raise ConfigError(f"unexpected section [{sec_name}]")
        name = sec_name[len("probe:"):]
        if not name:
            raise ConfigError("probe sections are named [probe:NAME]")
        sections.append(_Section(name, parser[sec_name]))
    return seed, out_dir, workers, sections


def probe_seed(master: int, name: str) -> int:
    """Per-probe seed: stable under adding/reordering other probes."""
    digest = hashlib.sha256(name.encode()).digest()
    return (master ^ int.from_bytes(digest[:8], "big")) & (2**63 - 1)


# ---------------------------------------------------------------------------
# probe execution


def _scaled(n: int, scale: float) -> int:
    return max(1, round(n * scale))


def _run_probe(sec: _Section, seed: int, workers: int, scale: float):
    """Dispatch one probe section; returns (report, {filename: rows})."""
    ptype = sec.get("type", required=True)
    if ptype not in REGISTRY:
        raise ConfigError(
            f"[probe:{sec.name}] unknown type {ptype!r}; see list-probes"
        )
    samples = _scaled(sec.get_int("samples", required=True), scale)
    size = sec.get_int("size", required=True)
    curves = {}

    if ptype in ("wegner", "minami"):
        spec = _ensemble(sec)
        energy = sec.get_float("energy", required=True)
        widths = sec.get_floats("widths", required=True)
        fn = probes.wegner_probe if ptype == "wegner" else probes.minami_probe
        sec.warn_unused()
        report = fn(spec, energy, widths, size, samples, seed=seed, workers=workers)
        if ptype == "wegner":
            rows = [("width", "p_hat", "ci_lo", "ci_hi")]
            for w in widths:
                e = report.estimate(f"p_hat[{w:.6g}]")
                rows.append((w, e.value, e.ci[0], e.ci[1]))
        else:
            rows = [("width", "m_hat", "m_lo", "m_hi", "p2_hat", "p2_lo", "p2_hi")]
            for w in widths:
                m = report.estimate(f"m_hat[{w:.6g}]")
                p2 = report.estimate(f"p2_hat[{w:.6g}]")
                rows.append((w, m.value, m.ci[0], m.ci[1], p2.value, p2.ci[0], p2.ci[1]))
        curves[f"{sec.name}_curve.csv"] = rows

    elif ptype == "decorrelation":
        spec = _ensemble(sec)
        ea = sec.get_float("energy_a", required=True)
        eb = sec.get_float("energy_b", required=True)
        hw = sec.get_float("half_width")
        disjoint = sec.get_bool("disjoint")
        sec.warn_unused()
        report = probes.decorrelation_probe(
            spec, ea, eb, size, samples, seed=seed, workers=workers,
            half_width=hw, disjoint=disjoint,
        )

    elif ptype == "level_statistics":
        spec = _ensemble(sec)
        energy = sec.get_float("energy", required=True)
        intervals = sec.get_intervals("intervals", [(0.0, 1.0), (1.0, 2.0), (0.0, 2.0)])
        collect = sec.get_int("collect", 0)
        kw = _ids_kwargs(sec, scale)
        sec.warn_unused()
        report, samples_out = probes.level_statistics_probe(
            spec, energy, size, samples, seed=seed, workers=workers,
            intervals=intervals, collect=collect, **kw,
        )
        if samples_out:
            pts = [("draw", "xi")]
            for s in samples_out:
                for x in s.points:
                    pts.append((s.index, float(x)))
            curves[f"{sec.name}_points.csv"] = pts

    elif ptype == "joint_independence":
        spec = _ensemble(sec)
        ea = sec.get_float("energy_a", required=True)
        eb = sec.get_float("energy_b", required=True)
        la = sec.get_float("length_a", 1.0)
        lb = sec.get_float("length_b", 1.0)
        kw = _ids_kwargs(sec, scale)
        sec.warn_unused()
        report = probes.joint_independence_probe(
            spec, ea, eb, size, samples, seed=seed, workers=workers,
            length_a=la, length_b=lb, **kw,
        )

    elif ptype == "spacing":
        spec = _ensemble(sec)
        energy = sec.get_float("energy", required=True)
        hw = sec.get_float("half_width", 2.0)
        kw = _ids_kwargs(sec, scale)
        kw.pop("ids_half_width", None)
        sec.warn_unused()
        report, spacings = probes.spacing_probe(
            spec, energy, size, samples, seed=seed, workers=workers,
            half_width=hw, **kw,
        )
        ecdf = [("spacing", "ecdf")]
        srt = np.sort(spacings)
        m = srt.size
        for i, x in enumerate(srt):
            ecdf.append((float(x), (i + 1) / m))
        curves[f"{sec.name}_ecdf.csv"] = ecdf

    else:  # qgraph-minami
        law = _parse_law(sec.get("law", "uniform:0,1"))
        energy = sec.get_float("energy", required=True)
        widths = sec.get_floats("widths", required=True)
        wscale = sec.get_float("width_scale")
        sec.get("kind")  # tolerated for uniformity; ensemble is fixed
        sec.warn_unused()
        report = probes.qgraph_minami_probe(
            law, energy, widths, size, samples, seed=seed, workers=workers,
            width_scale=wscale,
        )
        rows = [("width", "p1_hat", "p1_lo", "p1_hi", "p2_hat", "p2_lo", "p2_hi")]
        for w in widths:
            p1 = report.estimate(f"p1_hat[{w:.6g}]")
            p2 = report.estimate(f"p2_hat[{w:.6g}]")
            rows.append((w, p1.value, p1.ci[0], p1.ci[1], p2.value, p2.ci[0], p2.ci[1]))
        curves[f"{sec.name}_curve.csv"] = rows

    return report, curves


def _ids_kwargs(sec: _Section, scale: float) -> dict:
    kw = {}
    for key in ("ids_half_width",):
        v = sec.get_float(key)
        if v is not None:
            kw[key] = v
    for key in ("ids_points",):
        v = sec.get_int(key)
        if v is not None:
            kw[key] = v
    v = sec.get_int("ids_samples")
    if v is not None:
        kw["ids_samples"] = max(8, _scaled(v, scale))
    elif scale != 1.0:
        kw["ids_samples"] = max(8, _scaled(2048, scale))
    return kw


def _write_csv(path: Path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _evaluate_checks(report, checks):
    """Returns rows (estimate, bound spec, pass?) for the summary."""
    results = []
    for est_name, which, bound in checks:
        try:
            value = report.estimate(est_name).value
        except KeyError:
            results.append((est_name, which, bound, None, False))
            continue
        if value != value:  # NaN never passes a bound
            ok = False
        elif which == "min":
            ok = value >= bound
        else:
            ok = value <= bound
        results.append((est_name, which, bound, value, ok))
    return results


def cmd_run(args) -> int:
    try:
        master, out_dir, cfg_workers, sections = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    workers = args.workers or cfg_workers or int(os.environ.get(ENV_WORKERS, "1"))
    out = Path(args.out or out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = [
        ("probe", "type", "estimate", "value", "ci_lo", "ci_hi",
         "check", "bound", "status")
    ]
    any_error = False
    any_check_failed = False
    for sec in sections:
        ptype = sec.options.get("type", "?")
        try:
            checks = sec.checks()
            report, curves = _run_probe(
                sec, probe_seed(master, sec.name), workers, args.scale
            )
        except Exception as exc:  # isolate probe failures
            any_error = True
            print(f"probe {sec.name} failed: {exc}", file=sys.stderr)
            summary.append((sec.name, ptype, "error", str(exc), "", "", "", "", "ERROR"))
            continue
        (out / f"{sec.name}.json").write_text(report.to_json())
        for fname, rows in curves.items():
            _write_csv(out / fname, rows)
        check_map = {}
        for est_name, which, bound, value, ok in _evaluate_checks(report, checks):
            check_map.setdefault(est_name, []).append((which, bound, ok))
            if not ok:
                any_check_failed = True
        for est in report.estimates:
            lo, hi = est.ci if est.ci is not None else ("", "")
            for which, bound, ok in check_map.get(est.name, [(None, "", None)]):
                summary.append(
                    (
                        sec.name, ptype, est.name, est.value, lo, hi,
                        which or "", bound,
                        "" if ok is None else ("PASS" if ok else "FAIL"),
                    )
                )
        for est_name, entries in check_map.items():
            if all(e.name != est_name for e in report.estimates):
                for which, bound, ok in entries:
                    summary.append(
                        (sec.name, ptype, est_name, "missing", "", "",
                         which, bound, "FAIL")
                    )
    _write_csv(out / "summary.csv", summary)
    if any_error:
        return 2
    if args.check and any_check_failed:
        return 1
    return 0


def cmd_list_probes(args) -> int:
    for name, (claim, params) in REGISTRY.items():
        print(name)
        print(f"  tests: {claim}")
        print(f"  params: {params}")
    return 0


def _spec_from_args(args) -> EnsembleSpec:
    return EnsembleSpec(
        args.kind,
        law=_parse_law(args.law) if args.law else None,
        profile=_parse_profile(args.profile) if args.profile else None,
        margin=args.margin,
    )


def cmd_ids(args) -> int:
    spec = _spec_from_args(args)
    grid = np.linspace(args.min, args.max, args.points)
    table = estimate_ids(
        spec, args.size, args.samples, grid, seed=args.seed, workers=args.workers
    )
    table.to_csv(args.out)
    print(f"wrote {args.points}-point table to {args.out}")
    return 0


def cmd_lyapunov(args) -> int:
    spec = _spec_from_args(args)
    est = transfer.lyapunov(
        spec, args.energy, steps=args.steps, samples=args.samples, seed=args.seed
    )
    print(
        json.dumps(
            {
                "gamma": est.gamma,
                "stderr": est.stderr,
                "ci99": list(est.ci99),
                "steps": est.steps,
                "samples": est.samples,
                "energy": args.energy,
            },
            sort_keys=True,
            indent=2,
        )
    )
    return 0


def _add_spec_args(p):
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--law", help="uniform:lo,hi or piecewise:FILE")
    p.add_argument("--profile", help="finite:v,... or geometric:amp,rate (alloy)")
    p.add_argument("--margin", type=int, default=0, help="alloy overhang margin")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=int(os.environ.get(ENV_WORKERS, "1")))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="randspec",
        description="Monte Carlo laboratory for random tridiagonal operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the probes in a config file")
    p_run.add_argument("config", help="config path, or 'paper-suite' for the bundled suite")
    p_run.add_argument("--check", action="store_true", help="evaluate check_* bounds")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument(
        "--scale", type=float, default=1.0,
        help="multiply all sample counts (smoke-test factor; estimates keep "
             "their meaning, bounds may fail at reduced scale)",
    )
    p_run.set_defaults(fn=cmd_run)

    p_list = sub.add_parser("list-probes", help="show the probe registry")
    p_list.set_defaults(fn=cmd_list_probes)

    p_ids = sub.add_parser("ids", help="estimate an integrated density of states table")
    _add_spec_args(p_ids)
    p_ids.add_argument("--size", type=int, required=True)
    p_ids.add_argument("--min", type=float, required=True)
    p_ids.add_argument("--max", type=float, required=True)
    p_ids.add_argument("--points", type=int, default=201)
    p_ids.add_argument("--out", default="ids.csv")
    p_ids.set_defaults(fn=cmd_ids)

    p_ly = sub.add_parser("lyapunov", help="estimate a Lyapunov exponent")
    _add_spec_args(p_ly)
    p_ly.add_argument("--energy", type=float, required=True)
    p_ly.add_argument("--steps", type=int, default=2000)
    p_ly.set_defaults(fn=cmd_lyapunov)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
