"""Command-line driver: every run writes one JSON (or text) report.

Exit codes: 0 pass, 1 usage error, 2 fail, 3 refused by the work budget or
out of sampling attempts.
Reports carry no timing unless ``--timing`` is given, so identical
(config, seed, version) runs produce byte-identical output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    BoundQuery,
    bernstein_bound,
    minimal_width,
    prop1_failure_log_bound,
    prop2_failure_log_bound,
)
from .distribution import (
    Distribution,
    random_distribution,
    theorem8_construct,
    verify_distribution_conclusion,
)
from .dyadic import fraction_from_json, fraction_json, parse_rational
from .errors import BudgetExceeded, ConstructionFailed, UsageError
from .hypercube import DenseSubset, IndexSet, Partition
from .partition import (
    DEFAULT_BUDGET,
    PartitionSearchExhausted,
    attempt_rng,
    find_partition,
    sample_partition,
    verify_prop1,
)
from .tower import (
    BlockSpec,
    BlockTower,
    CylinderUnion,
    build_tower,
    covering_check,
    random_cylinder_union,
)
from .translate_lemma import (
    BlockSlice,
    StageParams,
    build_T_J,
    jxz_summability,
    tower_stage_params,
    verify_TJ,
)

EXIT_PASS, EXIT_USAGE, EXIT_FAIL, EXIT_REFUSED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _rational_list(text: str) -> list[Fraction]:
    return [_rational(v) for v in str(text).split(",") if v.strip()]


def _slice(text: str) -> tuple[int, int]:
    """``"k..m"`` -> (k, n) with n = m - k."""
    lo, sep, hi = str(text).partition("..")
    if not sep:
        lo = hi = lo
    k, m = int(lo), int(hi)
    if m < k:
        raise argparse.ArgumentTypeError(f"empty slice {text!r}")
    return k, m - k


def _load(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _unwrap(obj: dict, key: str) -> dict:
    # accept either a bare object or a full report that contains it
    if "result" in obj and isinstance(obj["result"], dict):
        obj = obj["result"]
    return obj.get(key, obj)


def _save(path, obj) -> None:
    if path:
        Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _budget_for(args) -> int:
    return args.budget if args.budget is not None else DEFAULT_BUDGET


# subcommands


def cmd_bounds(args) -> tuple[bool, dict]:
    q = BoundQuery(args.width, args.k, args.epsilon, args.delta)
    out = {
        "clause1": prop1_failure_log_bound(q).to_json(),
        "clause2": prop2_failure_log_bound(q).to_json(),
        "log_bound": prop1_failure_log_bound(q).to_json()["log_bound"],
    }
    if args.target is not None:
        out["minimal_width"] = minimal_width(args.k, args.epsilon, args.delta, args.target)
    if args.bernstein_n is not None:
        out["bernstein"] = bernstein_bound(args.bernstein_n, args.delta).to_json()
    return True, out


def _witnesses(width: int, density: Fraction | None, count: int, seed: int) -> list[DenseSubset]:
    if not count:
        return []
    if density is None:
        raise UsageError("--witness-density is required with --witnesses")
    size = density * (1 << width)
    if size.denominator != 1:
        raise UsageError("witness density must give an integer cardinality")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x55]))
    return [DenseSubset.random(IndexSet(width), int(size), rng) for _ in range(count)]


def cmd_partition_find(args) -> tuple[bool, dict]:
    W = _witnesses(args.width, args.witness_density, args.witnesses, args.seed)
    try:
        res = find_partition(
            IndexSet(args.width),
            args.k,
            args.delta,
            witnesses=W,
            delta2=args.delta2 if W else None,
            mode=args.mode,
            max_tries=args.max_tries,
            seed=args.seed,
            verify_mode=args.verify_mode,
            samples=args.samples,
            budget=_budget_for(args),
        )
    except PartitionSearchExhausted:
        raise
    except ConstructionFailed as exc:
        return False, {"error": str(exc), "details": exc.details}
    _save(args.save, res.partition.to_json())
    return True, res.to_json()


def cmd_partition_verify(args) -> tuple[bool, dict]:
    p = Partition.from_json(_unwrap(_load(args.partition), "partition"))
    rep = verify_prop1(p, args.k, args.delta, mode=args.verify_mode, samples=args.samples, seed=args.seed, budget=_budget_for(args))
    return rep.passed, {"prop1": rep.to_json()}


def _partition_arg(args, width: int) -> Partition:
    if args.partition:
        p = Partition.from_json(_unwrap(_load(args.partition), "partition"))
        if p.width != width:
            raise UsageError("partition width differs from the distribution width")
        return p
    return sample_partition(IndexSet(width), "balanced", args.seed)


def cmd_dist_theorem8(args) -> tuple[bool, dict]:
    if args.distribution:
        m = Distribution.from_json(_unwrap(_load(args.distribution), "distribution"))
    else:
        if args.width is None:
            raise UsageError("give --distribution or --width")
        m = random_distribution(IndexSet(args.width), args.granularity, attempt_rng(args.seed, 1))
    p = _partition_arg(args, m.width)
    try:
        cert = theorem8_construct(
            m, p, args.delta, bin_delta=args.bin_delta, bin_threshold=args.bin_threshold, bin_density_loss=args.bin_density_loss
        )
    except ConstructionFailed as exc:
        return False, {"error": str(exc)}
    check = verify_distribution_conclusion(m, p, cert.T_m, cert.certified_error)
    out = {
        "distribution": m.to_json(),
        "partition": p.to_json(),
        "certificate": cert.to_json(),
        "verification": check.to_json(),
    }
    _save(args.save, out)
    return check.passed, out


def cmd_dist_verify(args) -> tuple[bool, dict]:
    obj = _load(args.certificate)
    body = obj.get("result", obj)
    m = Distribution.from_json(body["distribution"])
    p = Partition.from_json(body["partition"])
    cert = body["certificate"]
    T = DenseSubset.from_json(cert["T_m"])
    bound = args.bound if args.bound is not None else fraction_from_json(cert["certified_error"])
    rep = verify_distribution_conclusion(m, p, T, bound)
    return rep.passed, {"verification": rep.to_json()}


def _broadcast(values, n: int, name: str):
    if values is None:
        return None
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise UsageError(f"--{name} needs 1 or {n} values")
    return values


def cmd_tower_build(args) -> tuple[bool, dict]:
    widths = args.widths
    n = len(widths)
    ks = _broadcast(args.k, n, "k")
    deltas = _broadcast(args.delta, n, "delta")
    eps = _broadcast(args.epsilon, n, "epsilon")
    specs = [BlockSpec(w, k, e, d) for w, k, e, d in zip(widths, ks, eps, deltas)]
    try:
        t = build_tower(specs, seed=args.seed, max_tries=args.max_tries, budget=_budget_for(args))
    except PartitionSearchExhausted:
        raise
    except ConstructionFailed as exc:
        return False, {"error": str(exc)}
    _save(args.save, t.to_json())
    return True, {"tower": t.to_json()}


def _tower(path) -> BlockTower:
    return BlockTower.from_json(_unwrap(_load(path), "tower"))


def cmd_tower_covering(args) -> tuple[bool, dict]:
    t = _tower(args.tower)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x43]))
    if args.u:
        unions = [CylinderUnion.from_json(t, _unwrap(_load(args.u), "U"))]
    else:
        unions = (random_cylinder_union(t, rng, max_measure=args.max_measure) for _ in range(args.unions))
    runs = []
    ok = True
    for U in unions:
        rep = covering_check(t, U, budget=_budget_for(args))
        ok &= not rep.counterexamples
        runs.append({"U_measure": fraction_json(U.measure()), "report": rep.to_json()})
    return ok, {"runs": runs}


def _stage_params(args, sl: BlockSlice) -> list[StageParams]:
    knobs = {
        "bin_delta": args.bin_delta,
        "bin_threshold": args.bin_threshold,
        "bin_density_loss": args.bin_density_loss,
    }
    return tower_stage_params(sl, **knobs)


def _J_arg(args, sl: BlockSlice, salt: int = 0) -> DenseSubset:
    if args.J:
        return DenseSubset.from_json(_unwrap(_load(args.J), "J"))
    if args.J_density is None:
        raise UsageError("give --J or --J-density")
    size = args.J_density * (1 << sl.width)
    if size.denominator != 1 or size == 0:
        raise UsageError("J density must give a positive integer cardinality")
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x4A, salt]))
    return DenseSubset.random(sl.universe, int(size), rng)


def cmd_lemma5_build(args) -> tuple[bool, dict]:
    t = _tower(args.tower)
    k, n = args.slice
    sl = BlockSlice(t, k, n)
    J = _J_arg(args, sl)
    try:
        cert = build_T_J(J, sl, _stage_params(args, sl), budget=_budget_for(args))
    except ConstructionFailed as exc:
        return False, {"error": str(exc), "details": {k: v for k, v in exc.details.items()}}
    out = {"J": J.to_json(), "certificate": cert.to_json()}
    _save(args.save, out)
    return cert.verified_all_t, out


def cmd_lemma5_verify(args) -> tuple[bool, dict]:
    t = _tower(args.tower)
    k, n = args.slice
    sl = BlockSlice(t, k, n)
    obj = _load(args.certificate)
    body = obj.get("result", obj)
    cert = body["certificate"]
    J = DenseSubset.from_json(body["J"]) if not args.J else DenseSubset.from_json(_unwrap(_load(args.J), "J"))
    T = DenseSubset.from_json(cert["T_J"])
    bounds = {
        tuple(int(c) for c in key): fraction_from_json(v) for key, v in cert["ledger"]["pattern_bounds"].items()
    }
    pats = "all" if args.all_patterns else [(0,) * (n + 1)]
    rep = verify_TJ(J, sl, T, bounds, pats, budget=_budget_for(args))
    return rep.passed, {"verification": rep.to_json()}


def cmd_jxz(args) -> tuple[bool, dict]:
    t = _tower(args.tower)
    groups = args.groups
    if groups is None:
        groups = [(j, j + 1) for j in range(t.depth)]
    Js, certs = [], []
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x5A]))
    z = 0
    for g, (a, b) in enumerate(groups):
        sl = BlockSlice(t, a, b - a - 1)
        size = (1 << sl.width) >> g
        if size == 0:
            raise UsageError(f"group {g} too narrow for density 2^-{g}")
        J = DenseSubset.random(sl.universe, size, rng)
        cert = build_T_J(J, sl, _stage_params(args, sl), budget=_budget_for(args))
        Js.append(J)
        certs.append(cert)
        pts = cert.T_J.points()
        if pts.size:
            z |= int(rng.choice(pts)) << t.offsets[a]
    if args.z is not None:
        z = args.z
    N = groups[-1][1]
    x = [int(c) for c in args.x] if args.x is not None else [int(b) for b in rng.integers(0, 2, size=N)]
    rep = jxz_summability(t, groups, Js, z, x, certs, normalization=args.normalization)
    return rep.passed, {"z": z, "x": "".join(map(str, x)), "groups": [list(g) for g in groups], "report": rep.to_json()}


def _groups(text: str) -> list[tuple[int, int]]:
    out = []
    for part in str(text).split(","):
        k, n = _slice(part)
        out.append((k, k + n + 1))
    return out


# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option values (flags given explicitly win)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=None, help="max point-operations for exhaustive sweeps")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--timing", action="store_true", help="add wall-clock seconds (breaks byte-identity)")


def _bin_knobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bin-delta", type=_rational)
    p.add_argument("--bin-threshold", type=_rational)
    p.add_argument("--bin-density-loss", type=_rational)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cubelab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bounds", help="closed-form failure log-bounds")
    _common(b)
    b.add_argument("--width", type=int)
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--delta", type=_rational)
    b.add_argument("--epsilon", type=_rational, default=Fraction(1, 4))
    b.add_argument("--target", type=float, help="log-probability target for the minimal width")
    b.add_argument("--bernstein-n", type=int)
    b.set_defaults(func=cmd_bounds, required_options=('width', 'delta'))

    part = sub.add_parser("partition").add_subparsers(dest="action", required=True, parser_class=_Parser)
    f = part.add_parser("find")
    _common(f)
    f.add_argument("--width", type=int)
    f.add_argument("--k", type=int)
    f.add_argument("--delta", type=_rational)
    f.add_argument("--delta2", type=_rational)
    f.add_argument("--witnesses", type=int, default=0)
    f.add_argument("--witness-density", type=_rational)
    f.add_argument("--mode", choices=("balanced", "fair-coin"), default="balanced")
    f.add_argument("--max-tries", type=int, default=10)
    f.add_argument("--verify-mode", choices=("exhaustive", "sampled"), default="exhaustive")
    f.add_argument("--samples", type=int, default=1000)
    f.add_argument("--save")
    f.set_defaults(func=cmd_partition_find, required_options=('width', 'k', 'delta'))
    v = part.add_parser("verify")
    _common(v)
    v.add_argument("--partition")
    v.add_argument("--k", type=int)
    v.add_argument("--delta", type=_rational)
    v.add_argument("--verify-mode", choices=("exhaustive", "sampled"), default="exhaustive")
    v.add_argument("--samples", type=int, default=1000)
    v.set_defaults(func=cmd_partition_verify, required_options=('partition', 'k', 'delta'))

    dist = sub.add_parser("dist").add_subparsers(dest="action", required=True, parser_class=_Parser)
    t8 = dist.add_parser("theorem8")
    _common(t8)
    t8.add_argument("--distribution")
    t8.add_argument("--width", type=int)
    t8.add_argument("--granularity", type=int, default=16)
    t8.add_argument("--partition")
    t8.add_argument("--delta", type=_rational)
    _bin_knobs(t8)
    t8.add_argument("--save")
    t8.set_defaults(func=cmd_dist_theorem8, required_options=('delta',))
    dv = dist.add_parser("verify")
    _common(dv)
    dv.add_argument("--certificate")
    dv.add_argument("--bound", type=_rational)
    dv.set_defaults(func=cmd_dist_verify, required_options=('certificate',))

    tw = sub.add_parser("tower").add_subparsers(dest="action", required=True, parser_class=_Parser)
    tb = tw.add_parser("build")
    _common(tb)
    tb.add_argument("--widths", type=_int_list)
    tb.add_argument("--k", type=_int_list, default=[2])
    tb.add_argument("--delta", type=_rational_list, default=[Fraction(1, 4)])
    tb.add_argument("--epsilon", type=_rational_list, default=[Fraction(1, 8)])
    tb.add_argument("--max-tries", type=int, default=20)
    tb.add_argument("--save")
    tb.set_defaults(func=cmd_tower_build, required_options=('widths',))
    tc = tw.add_parser("check-covering")
    _common(tc)
    tc.add_argument("--tower")
    tc.add_argument("--u", help="CylinderUnion JSON; default draws --unions seeded unions")
    tc.add_argument("--unions", type=int, default=20)
    tc.add_argument("--max-measure", type=_rational, default=Fraction(1, 2))
    tc.set_defaults(func=cmd_tower_covering, required_options=('tower',))

    l5 = sub.add_parser("lemma5").add_subparsers(dest="action", required=True, parser_class=_Parser)
    lb = l5.add_parser("build")
    _common(lb)
    lb.add_argument("--tower")
    lb.add_argument("--slice", type=_slice, help="block range k..k+n")
    lb.add_argument("--J")
    lb.add_argument("--J-density", type=_rational)
    _bin_knobs(lb)
    lb.add_argument("--save")
    lb.set_defaults(func=cmd_lemma5_build, required_options=('tower', 'slice'))
    lv = l5.add_parser("verify")
    _common(lv)
    lv.add_argument("--tower")
    lv.add_argument("--slice", type=_slice)
    lv.add_argument("--certificate")
    lv.add_argument("--J")
    lv.add_argument("--all-patterns", action="store_true")
    lv.set_defaults(func=cmd_lemma5_verify, required_options=('tower', 'slice', 'certificate'))

    j = sub.add_parser("jxz", help="summability report for seeded J_n with density 2^-n")
    _common(j)
    j.add_argument("--tower")
    j.add_argument("--groups", type=_groups, help="comma-separated block ranges, e.g. 0..0,1..1")
    j.add_argument("--z", type=int)
    j.add_argument("--x", help="side bits, block 0 first")
    j.add_argument("--normalization", choices=("report", "enforce"), default="report")
    _bin_knobs(j)
    j.set_defaults(func=cmd_jxz, required_options=('tower',))
    return ap


_CONVERTERS = {
    "delta": _rational,
    "delta2": _rational,
    "epsilon": _rational,
    "witness_density": _rational,
    "J_density": _rational,
    "bin_delta": _rational,
    "bin_threshold": _rational,
    "bin_density_loss": _rational,
    "bound": _rational,
    "max_measure": _rational,
}


def _apply_config(args, argv: list[str]) -> None:
    """Fill options from --config for every flag not given on the command line."""
    if not args.config:
        return
    cfg = _load(args.config)
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr in ("func", "command", "action", "config", "required_options"):
            raise UsageError(f"config field {key!r} is not an option of this command")
        if attr in given:
            continue
        if isinstance(value, float):
            raise UsageError(f"config field {key!r}: write rationals as 'p/q' strings")
        current = getattr(args, attr)
        if attr in _CONVERTERS and value is not None:
            value = _CONVERTERS[attr](value)
        elif attr in ("widths",) or (attr == "k" and isinstance(current, list)):
            value = _int_list(value) if isinstance(value, str) else [int(v) for v in value]
        elif attr == "slice":
            value = _slice(value)
        elif attr == "groups":
            value = _groups(value)
        setattr(args, attr, value)
    if getattr(args, "command", None) == "tower" and args.action == "build":
        for attr in ("delta", "epsilon"):
            v = getattr(args, attr)
            if not isinstance(v, list):
                setattr(args, attr, [v])


def _config_dict(args) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "output", "format", "timing", "config", "required_options"):
            continue
        out[key] = _jsonable(value)
    return out


def _jsonable(value):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def run(argv: list[str] | None = None) -> tuple[int, dict, argparse.Namespace]:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    _apply_config(args, argv)
    missing = [f"--{n.replace('_', '-')}" for n in getattr(args, "required_options", ()) if getattr(args, n) is None]
    if missing:
        raise UsageError(f"missing required options: {', '.join(missing)}")
    config = _config_dict(args)
    report = {
        "artifact": "cubelab",
        "version": __version__,
        "command": " ".join(filter(None, [args.command, getattr(args, "action", None)])),
        "config": config,
        "config_hash": config_hash(config),
        "seed": args.seed,
    }
    start = time.perf_counter()
    try:
        ok, result = args.func(args)
        code = EXIT_PASS if ok else EXIT_FAIL
        report["verdict"] = "pass" if ok else "fail"
        report["result"] = result
    except BudgetExceeded as exc:
        code = EXIT_REFUSED
        report["verdict"] = "refused"
        report["refusal"] = {"what": exc.what, "estimate": exc.estimate, "budget": exc.budget}
    except PartitionSearchExhausted as exc:
        code = EXIT_REFUSED
        report["verdict"] = "exhausted"
        report["refusal"] = {"what": str(exc), "tally": exc.tally, "log": [r.to_json() for r in exc.log]}
    if args.timing:
        report["timing"] = {"wall_seconds": round(time.perf_counter() - start, 6)}
    return code, report, args


def _render_text(report: dict) -> str:
    lines = [f"{report['command']}: {report['verdict']}", f"config_hash {report['config_hash']}"]
    if "refusal" in report:
        r = report["refusal"]
        if "estimate" in r:
            lines.append(f"refused: {r['what']} needs {r['estimate']} > budget {r['budget']}")
        else:
            lines.append(f"exhausted: {r['what']}")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    try:
        code, report, args = run(argv)
    except (UsageError, ValueError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.format == "json":
        text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    else:
        text = _render_text(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
