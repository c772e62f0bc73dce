"""Command-line entry point.

Every subcommand prints (or writes to ``--out``) a JSON report with the
config echo, one entry per check and the package version. The exit code is 0
when every check passes and 1 otherwise; input problems get their own codes.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .anosov import ContinuityResult, estimated_splitting, splitting_continuity_test, verify_splittings
from .config import ConfigError, RunConfig, from_mapping, load_config
from .gallery import (
    ExampleError,
    attractor_approx,
    cross_section,
    get_bundle,
    strand_count,
    unstable_leaf_curve,
)
from .geometry import METRIC_PRESETS, Curve, GeometryError, MetricField, TangentVector, pairing, parallel_transport
from .nsds import WindowError
from .report import CheckEntry, ReportDocument
from .shadowing import (
    PseudoOrbitII,
    conjugacy_invariance_test,
    find_tracer_I,
    is_pseudo_orbit_I,
    is_pseudo_orbit_II,
    linear_conjugacy,
    random_pseudo_orbit_I,
    tracing_margins_I,
    typeII_implies_typeI_test,
)
from .subspace import same_point_basis_distance

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_UNKNOWN_EXAMPLE = 3
EXIT_BAD_CONFIG = 4
EXIT_WINDOW = 5
EXIT_NUMERICAL = 6

ESTIMATE_TOL = 1e-4
TRANSPORT_TOL = 1e-7


class UnknownExample(KeyError):
    pass


def _bundle(cfg: RunConfig):
    try:
        return get_bundle(cfg.example, window=cfg.window, **cfg.params)
    except KeyError as exc:
        raise UnknownExample(exc.args[0]) from None
    except TypeError as exc:
        raise ExampleError(f"bad parameter for example {cfg.example!r}: {exc}") from None


def _points(cfg: RunConfig, bundle, stream: str):
    rng = cfg.rng(stream)
    return [bundle.sample_point(rng, 0) for _ in range(cfg.samples)]


# ---------------------------------------------------------------- subcommands

def cmd_verify_family(cfg: RunConfig):
    bundle = _bundle(cfg)
    pts = _points(cfg, bundle, "points")
    splittings = [bundle.model_splitting(p) for p in pts]
    rep = verify_splittings(bundle.family, bundle.metric, splittings, cfg.N, tol_inv=cfg.tol_inv,
                            tol_limit=cfg.tol_limit, splitting_field=bundle.model_splitting,
                            rng=cfg.rng("mixed-limit"))
    return rep.entries, {"params": rep.params}


def cmd_estimate_splitting(cfg: RunConfig):
    bundle = _bundle(cfg)
    g, F = bundle.metric, bundle.family
    seed = int(cfg.rng("estimate").integers(2 ** 31))
    du, ds, bases = [], [], []
    for p in _points(cfg, bundle, "points"):
        model = bundle.model_splitting(p)
        est = estimated_splitting(F, p, model.null_dist, (model.stable.dim, model.unstable.dim), seed=seed)
        du.append(same_point_basis_distance(g, est.unstable, model.unstable) if model.unstable.dim else 0.0)
        ds.append(same_point_basis_distance(g, est.stable, model.stable) if model.stable.dim else 0.0)
        bases.append({"point": p.coords, "unstable": est.unstable.matrix, "stable": est.stable.matrix})
    checks = [
        CheckEntry("unstable_vs_model", max(du) < ESTIMATE_TOL, max(du), len(du)),
        CheckEntry("stable_vs_model", max(ds) < ESTIMATE_TOL, max(ds), len(ds)),
    ]
    return checks, {"estimates": bases}


def cmd_continuity(cfg: RunConfig):
    bundle = _bundle(cfg)
    g, F = bundle.metric, bundle.family
    p = bundle.sample_point(cfg.rng("points"), 0)
    if bundle.name == "solenoid":
        curve = unstable_leaf_curve(F, p)
    else:
        direction = np.zeros(p.dim)
        direction[-1] = 1.0
        curve = Curve.line(0, p.coords, direction, (-1.0, 1.0))
    seed = int(cfg.rng("estimate").integers(2 ** 31))

    def field(q):
        model = bundle.model_splitting(q)
        return estimated_splitting(F, q, model.null_dist, (model.stable.dim, model.unstable.dim), seed=seed)

    ts = [2.0 ** -n for n in range(1, cfg.N + 3)]
    res = splitting_continuity_test(g, field, curve, ts, cfg.tol_cont)
    checks = [
        CheckEntry("continuity_unstable", ContinuityResult.converges(res.unstable, cfg.tol_cont),
                   res.unstable[-1], len(ts), {"distances": res.unstable}),
        CheckEntry("continuity_stable", ContinuityResult.converges(res.stable, cfg.tol_cont),
                   res.stable[-1], len(ts), {"distances": res.stable}),
    ]
    return checks, {"t": ts}


def cmd_shadow_check(cfg: RunConfig):
    bundle = _bundle(cfg)
    g, F = bundle.metric, bundle.family
    po_margin, tr_margin = 0.0, 0.0
    po_ok = tr_ok = True
    per_trial = []
    for t in range(cfg.trials):
        po = random_pseudo_orbit_I(bundle, cfg.rng(f"pseudo-orbit/{t}"), cfg.delta, cfg.length)
        pr = is_pseudo_orbit_I(g, F, po, cfg.delta)
        tr = find_tracer_I(g, F, po, cfg.epsilon, cfg.budget, cfg.rng(f"tracer/{t}"))
        po_ok &= pr.passed
        tr_ok &= tr.found
        po_margin = max(po_margin, pr.worst)
        tr_margin = max(tr_margin, tr.worst_margin)
        per_trial.append({
            "start": po.start,
            "pseudo_orbit_margins": pr.margins,
            "tracing_margins": tracing_margins_I(g, F, po, tr.tracer),
            "tracer": tr.tracer,
        })
    return [
        CheckEntry("pseudo_orbit", po_ok, po_margin, cfg.trials, {"delta": cfg.delta}),
        CheckEntry("traced", tr_ok, tr_margin, cfg.trials, {"epsilon": cfg.epsilon, "budget": cfg.budget}),
    ], {"trials": per_trial}


def cmd_hyper_shadow_check(cfg: RunConfig):
    bundle = _bundle(cfg)
    g, F = bundle.metric, bundle.family
    equal = 0
    for t in range(cfg.trials):
        po = random_pseudo_orbit_I(bundle, cfg.rng(f"pseudo-orbit/{t}"), cfg.delta, cfg.length)
        one = is_pseudo_orbit_I(g, F, po, cfg.delta)
        two = is_pseudo_orbit_II(g, F, PseudoOrbitII.singletons(po), cfg.delta)
        equal += one.passed == two.passed and np.array_equal(one.margins, two.margins)
    rep = typeII_implies_typeI_test(bundle, cfg.trials, cfg.delta, cfg.epsilon, cfg.seed, cfg.budget, cfg.length)
    return [
        CheckEntry("singleton_reduction", equal == cfg.trials, float(cfg.trials - equal), cfg.trials),
        CheckEntry("typeII_implies_typeI", rep.agreement_rate == 1.0, 1.0 - rep.agreement_rate,
                   rep.cloud_tracer_found, {"trials": rep.trials, "confirmed": rep.type_one_confirmed}),
    ], {}


def cmd_conjugacy(cfg: RunConfig):
    bundle = _bundle(cfg)
    pair = linear_conjugacy(bundle, cfg.scale, seed=cfg.seed)
    rep = conjugacy_invariance_test(pair, [cfg.delta], [cfg.epsilon], cfg.trials, cfg.seed, cfg.budget, cfg.length)
    ratios = np.array(rep.margin_ratios)
    dev = float(np.max(np.abs(ratios - pair.pullback)) / pair.pullback) if len(ratios) else 0.0
    return [
        CheckEntry("verdict_agreement", rep.disagreements == 0, float(rep.disagreements), len(rep.records)),
        CheckEntry("margin_scaling", dev <= 1e-9, dev, len(ratios), {"pullback": pair.pullback}),
    ], {"relation_residual": pair.residual}


def cmd_example(cfg: RunConfig):
    bundle = _bundle(cfg)
    checks = []
    if bundle.name == "solenoid":
        if cfg.section:
            header = ["u", "v"]
            rows = cross_section(cfg.depth, cfg.samples, 0.0, cfg.seed)
            if cfg.depth >= 1:
                k = strand_count(cfg.depth, cfg.samples, seed=cfg.seed)
                checks.append(CheckEntry("strand_count", k == 2 ** cfg.depth, float(k - 2 ** cfg.depth),
                                         cfg.samples, {"clusters": k, "expected": 2 ** cfg.depth}))
        else:
            header = ["theta", "u", "v"]
            approx = attractor_approx(cfg.depth, cfg.samples, cfg.seed)
            rows = approx.points
            checks.append(CheckEntry("attractor_membership", approx.check(), 0.0, cfg.samples))
    else:
        pts = _points(cfg, bundle, "points")
        header = ["i"] + [f"x{k}" for k in range(pts[0].dim)]
        rows = []
        for p in pts:
            sp = bundle.model_splitting(p)
            row = [float(p.component), *p.coords]
            for tag, part in (("s", sp.stable), ("u", sp.unstable), ("n", sp.null_dist)):
                for j, v in enumerate(part.matrix):
                    if p is pts[0]:
                        header += [f"{tag}{j}_{k}" for k in range(p.dim)]
                    row += list(v)
            rows.append(row)
        rows = np.array(rows)
    return checks, {"data": {"columns": header, "rows": rows}}


def cmd_transport(cfg: RunConfig):
    if cfg.metric_matrix is not None:
        g = MetricField.constant(cfg.metric_matrix, name="config")
        m = len(cfg.metric_matrix)
        defaults = ([0.0] * m, list(np.eye(m)[0]))
    elif cfg.metric in METRIC_PRESETS:
        g = METRIC_PRESETS[cfg.metric]()
        defaults = {
            "flat4": ([0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]),
            "polar": ([1.0, 0.0], [0.0, 1.0]),
            "sphere": ([np.pi / 4, 0.0], [0.0, 1.0]),
            "curved4": ([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]),
        }[cfg.metric]
    else:
        raise ConfigError(f"unknown metric {cfg.metric!r}; choose from {sorted(METRIC_PRESETS)}")
    start = np.array(cfg.start if cfg.start is not None else defaults[0], dtype=float)
    direction = np.array(cfg.direction if cfg.direction is not None else defaults[1], dtype=float)
    m = len(start)
    vec = np.array(cfg.vector if cfg.vector is not None else np.eye(m)[0], dtype=float)
    if len(direction) != m or len(vec) != m:
        raise ConfigError(f"metric {cfg.metric} needs {m}-component start, direction and vector")
    lo, hi = min(cfg.t_from, cfg.t_to), max(cfg.t_from, cfg.t_to)
    curve = Curve.line(0, start, direction, (lo, hi))
    v = TangentVector(curve.point(cfg.t_from), vec)
    Pv = parallel_transport(g, curve, v, cfg.t_from, cfg.t_to, cfg.steps_per_unit)
    before = pairing(g.at(v.base), vec, vec)
    after = pairing(g.at(Pv.base), Pv.components, Pv.components)
    err = abs(after - before)
    check = CheckEntry("metric_preserved", err <= TRANSPORT_TOL * max(1.0, abs(before)), err, 1)
    return [check], {"vector": Pv.components, "at": Pv.base.coords}


COMMANDS = {
    "verify-family": cmd_verify_family,
    "estimate-splitting": cmd_estimate_splitting,
    "continuity": cmd_continuity,
    "shadow-check": cmd_shadow_check,
    "hyper-shadow-check": cmd_hyper_shadow_check,
    "conjugacy": cmd_conjugacy,
    "example": cmd_example,
    "transport": cmd_transport,
}


def run(command: str, cfg: RunConfig) -> tuple[int, ReportDocument]:
    t0 = time.perf_counter()
    checks, extra = COMMANDS[command](cfg)
    doc = ReportDocument({"command": command, **cfg.to_dict()}, checks,
                         timing={"seconds": time.perf_counter() - t0}, extra=extra)
    return (EXIT_OK if doc.passed else EXIT_CHECK_FAILED), doc


# ---------------------------------------------------------------- argument handling

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _window(text: str) -> list[int]:
    vals = _floats(text)
    if len(vals) != 2 or any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"window must be two integers a,b, got {text!r}")
    return [int(v) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="write the report (or exported data) here instead of stdout")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--example")
    common.add_argument("--alpha", type=float, help="scaled example: metric growth factor")
    common.add_argument("--d", type=float, help="warped example: warping factor in (0,1)")
    common.add_argument("--N", type=int, help="largest iterate used by the checks")
    common.add_argument("--window", type=_window, help="index window a,b")
    common.add_argument("--delta", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--budget", type=int, help="tracer candidates per search")
    common.add_argument("--samples", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--length", type=int, help="pseudo-orbit length")
    common.add_argument("--scale", type=float, help="conjugacy: linear scaling factor")
    common.add_argument("--depth", type=int, help="example: solenoid iteration depth")
    common.add_argument("--section", action="store_true", default=None, help="example: export the angle-0 slice")
    common.add_argument("--metric", choices=sorted(METRIC_PRESETS))
    common.add_argument("--start", type=_floats)
    common.add_argument("--direction", type=_floats)
    common.add_argument("--from", dest="t_from", type=float)
    common.add_argument("--to", dest="t_to", type=float)
    common.add_argument("--vector", type=_floats)

    parser = argparse.ArgumentParser(prog="lorentz-nsds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base = load_config(args.config).to_dict() if args.config else RunConfig().to_dict()
    simple = ["seed", "out", "format", "example", "N", "window", "delta", "epsilon", "budget", "samples",
              "trials", "length", "scale", "depth", "section", "metric", "start", "direction", "t_from",
              "t_to", "vector"]
    for key in simple:
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    params = dict(base.get("params", {}))
    if args.alpha is not None:
        params["alpha"] = args.alpha
    if args.d is not None:
        params["d"] = args.d
    base["params"] = params
    return from_mapping(base)


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in np.asarray(rows).tolist():
        w.writerow([repr(float(x)) for x in r])
    return buf.getvalue()


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def emit(command: str, cfg: RunConfig, doc: ReportDocument) -> None:
    data = doc.extra.get("data") if command == "example" else None
    if data is not None and cfg.format == "csv":
        _emit(_rows_csv(data["columns"], data["rows"]), cfg.out)
        if cfg.out:
            doc.extra.pop("data")
            _emit(doc.to_json(), None)
        return
    if cfg.format == "csv":
        header = ["name", "pass", "margin", "n_samples"]
        rows = [[c.name, bool(c.passed), c.margin, c.n_samples] for c in doc.checks]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        _emit(buf.getvalue(), cfg.out)
        return
    _emit(doc.to_json(), cfg.out)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        code, doc = run(args.command, cfg)
    except ConfigError as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except UnknownExample as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_UNKNOWN_EXAMPLE
    except WindowError as exc:
        print(f"error: window violation: {exc}", file=sys.stderr)
        return EXIT_WINDOW
    except ExampleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    emit(args.command, cfg, doc)
    return code


if __name__ == "__main__":
    sys.exit(main())
