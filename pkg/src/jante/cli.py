"""Command-line entry point.

Exit status: 0 on success, 1 when a verification fails, 2 on usage errors.
Every command prints its effective seed to stderr; pass it back with
``--seed`` to reproduce the output byte for byte.
"""

from __future__ import annotations

import argparse
import secrets
import sys

from jante import discrete
from jante.errors import JanteError, VerificationError
from jante.experiments import ExperimentSpec, dump, persist, run_experiment, with_overrides
from jante.process import DistributionSpec, StopRule, derive_rng, read_configuration
from jante.topology import read_edge_list

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_discrete(text: str) -> dict:
    """``M=<int>[,probs=p1:...:pM]`` -> distribution dict."""
    fields = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"--discrete: expected key=value, got {part!r}")
        fields[key.strip()] = value.strip()
    if set(fields) - {"M", "probs"} or "M" not in fields:
        raise UsageError(f"--discrete: expected M=<int>[,probs=...], got {text!r}")
    try:
        M = int(fields["M"])
        probs = [float(p) for p in fields["probs"].split(":")] if "probs" in fields else None
        return DistributionSpec.discrete(M, probs).to_dict()
    except (ValueError, JanteError) as exc:
        raise UsageError(f"--discrete: {exc}") from None


def _add_common(p, *, topology=True, law=True, steps=True, runs=True, mode=True, init=True, fmt=True):
    if topology:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--cycle", type=int, metavar="N", help="cycle with N nodes")
        g.add_argument("--graph-file", metavar="PATH", help="1-based edge list: 'N E' then one edge per line")
    if law:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--discrete", metavar="M=<int>[,probs=p1:...:pM]", help="law on {1..M}")
        g.add_argument("--uniform", action="store_true", help="uniform law on [0, 1]")
    if steps:
        p.add_argument("--steps", metavar="T|until-absorbed|d-below=EPS", help="stop rule")
    if runs:
        p.add_argument("--runs", type=int, help="number of independent runs")
    if mode:
        p.add_argument("--mode", choices=("raw", "frozen"))
    if init:
        p.add_argument("--init", metavar="PATH|iid", help="initial configuration file, or iid draws")
    p.add_argument("--seed", type=int, metavar="U64")
    p.add_argument("--out", metavar="PATH")
    if fmt:
        p.add_argument("--format", choices=("csv", "jsonl"))
    p.add_argument("--spec", metavar="PATH", help="JSON experiment spec; flags override its fields")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jante", description="Simulate and verify the local Jante's law process.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the chain and write the step log")
    _add_common(p)

    p = sub.add_parser("absorb-hist", help="absorbing-value histogram of the frozen discrete process")
    _add_common(p, law=True, mode=False)

    p = sub.add_parser("rate", help="decay-rate estimates from the embedded continuous chain")
    _add_common(p, steps=False, mode=False)
    p.add_argument("--embedded-steps", type=int)
    p.add_argument("--burn-in", type=float)

    p = sub.add_parser("verify", help="run the property-verification suite")
    _add_common(p, topology=False, law=False, steps=False, runs=False, mode=False, init=False, fmt=False)
    p.add_argument("--samples", type=int)
    p.add_argument("--format", choices=("json", "csv", "jsonl"))

    p = sub.add_parser("path", help="print the explicit absorbing path of a configuration")
    p.add_argument("config", metavar="CONFIG", help="one integer per line, node order")
    p.add_argument("--M", type=int, required=True, dest="M", help="support is {1..M}")
    p.add_argument("--out", metavar="PATH", help="also write the path as CSV")

    p = sub.add_parser("counterexample", help="non-absorbing demonstrations for unequal support")
    p.add_argument("which", nargs="?", choices=("stable-family", "graph", "both"), default="both")
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--seed", type=int, metavar="U64")
    p.add_argument("--out", metavar="PATH", help="step-log CSV; suffixed per demo when running both")
    return parser


KIND_OF = {"simulate": "single_run", "absorb-hist": "absorb_hist", "rate": "rate_estimate",
           "verify": "verify_suite"}


def _seed(args):
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    if seed < 0 or seed >= 2**64:
        raise UsageError(f"--seed must be in [0, 2^64), got {seed}")
    print(f"seed={seed}", file=sys.stderr)
    return seed


def resolve_spec(args) -> ExperimentSpec:
    kind = KIND_OF[args.command]
    base = ExperimentSpec.from_json(args.spec) if getattr(args, "spec", None) else None
    if base is not None and base.kind != kind:
        raise UsageError(f"--spec: file describes {base.kind!r}, command needs {kind!r}")
    if base is None:
        defaults = {"absorb_hist": {"mode": "frozen", "steps": "until-absorbed", "runs": 1000},
                    "rate_estimate": {"runs": 200}}.get(kind, {})
        if args.command == "verify":
            defaults = {"format": "json"}
        base = ExperimentSpec(kind, **defaults)
    changes = {}
    if getattr(args, "cycle", None) is not None:
        changes["topology"] = {"cycle": args.cycle}
    elif getattr(args, "graph_file", None):
        try:
            changes["topology"] = read_edge_list(args.graph_file).descriptor()
        except (OSError, JanteError, ValueError) as exc:
            raise UsageError(f"--graph-file: {exc}") from None
    if getattr(args, "discrete", None):
        changes["distribution"] = parse_discrete(args.discrete)
    elif getattr(args, "uniform", False):
        changes["distribution"] = {"variant": "uniform01"}
    if getattr(args, "steps", None) is not None:
        try:
            StopRule.parse(args.steps)
        except JanteError as exc:
            raise UsageError(f"--steps: {exc}") from None
        changes["steps"] = args.steps
    for flag in ("runs", "mode", "format", "workers", "samples", "embedded_steps", "burn_in"):
        changes[flag] = getattr(args, flag, None)
    if getattr(args, "init", None) and args.init != "iid":
        dist = DistributionSpec.from_dict(changes.get("distribution", base.distribution))
        try:
            x = read_configuration(args.init, dist)
        except (OSError, JanteError) as exc:
            raise UsageError(f"--init: {exc}") from None
        changes["init"] = x.tolist()
    elif getattr(args, "init", None) == "iid":
        changes["init"] = "iid"
    if args.seed is None and args.spec:
        args.seed = base.seed
    changes["seed"] = _seed(args)
    changes["output"] = args.out
    try:
        spec = with_overrides(base, **changes)
        spec.build_topology()
        spec.build_distribution()
    except JanteError as exc:
        raise UsageError(str(exc)) from None
    return spec


def _emit(report, spec):
    if spec.output:
        persist(report, spec.output, spec.format, spec)
    else:
        dump(report, sys.stdout, spec.format, spec)


def cmd_experiment(args) -> int:
    spec = resolve_spec(args)
    if spec.kind == "rate_estimate":
        t = spec.build_topology()
        if not t.is_cycle or t.node_count < 5:
            raise UsageError("rate: --cycle N with N >= 5 is required")
        if spec.build_distribution().is_continuous is False:
            raise UsageError("rate: the rate claims concern --uniform")
    if spec.kind == "absorb_hist" and spec.build_distribution().is_continuous:
        raise UsageError("absorb-hist: needs --discrete")
    if spec.kind == "single_run" and spec.stop_rule().kind == "until_absorbed" \
            and spec.build_distribution().is_continuous:
        raise UsageError("--steps until-absorbed needs a discrete law")
    report = run_experiment(spec)
    _emit(report, spec)
    for line in _summary(report):
        print(line, file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def _summary(report):
    agg = report.aggregate
    if report.kind == "absorb_hist":
        yield f"absorbed {agg['absorbed']}/{agg['runs']}"
    elif report.kind == "rate_estimate":
        yield f"N={agg['N']} median rho_hat={agg['median_rho']:.6g} mean={agg['mean_rho']:.6g}"
    elif report.kind == "verify_suite":
        for row in report.rows:
            flag = "PASS" if row["passed"] else "FAIL"
            yield f"[{flag}] {row['name']}: samples={row['samples']} max_violation={row['max_violation']:.3e}"


def cmd_path(args) -> int:
    try:
        x = read_configuration(args.config, DistributionSpec.discrete(args.M))
        dist = DistributionSpec.discrete(args.M)
        if not dist.contains(x):
            raise UsageError(f"{args.config}: values must lie in 1..{args.M}")
    except (OSError, JanteError) as exc:
        raise UsageError(str(exc)) from None
    p = discrete.construct_absorbing_path(x, dist, M=args.M)
    p.check_windows()
    print("t,node,new_value,f_before,f_after")
    for row in p.rows():
        print(",".join(str(v) for v in row))
    print(f"T={p.T} bound={p.bound}")
    if args.out:
        p.to_csv(args.out)
    return EXIT_OK if p.T <= p.bound else EXIT_FAIL


def cmd_counterexample(args) -> int:
    seed = _seed(args)
    demos = {"stable-family": discrete.run_stable_family, "graph": discrete.run_counterexample_graph}
    chosen = list(demos) if args.which == "both" else [args.which]
    ok = True
    for k, name in enumerate(chosen):
        report, tr = demos[name](args.steps, derive_rng(seed, k))
        if args.out:
            out = args.out if len(chosen) == 1 else _suffixed(args.out, name)
            discrete.write_step_log(tr, out)
        flag = "PASS" if report.passed else "FAIL"
        print(f"[{flag}] {report.name}: steps={report.steps} replaced_nodes="
              f"{[v + 1 for v in report.replaced_nodes]} absorbed={report.absorbed}")
        ok &= report.passed
    return EXIT_OK if ok else EXIT_FAIL


def _suffixed(path, name):
    stem, dot, ext = path.rpartition(".")
    return f"{stem}-{name}.{ext}" if dot else f"{path}-{name}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "path":
            return cmd_path(args)
        if args.command == "counterexample":
            return cmd_counterexample(args)
        return cmd_experiment(args)
    except UsageError as exc:
        print(f"jante: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationError as exc:
        print(f"jante: verification failed: {exc} {exc.witness}", file=sys.stderr)
        return EXIT_FAIL
    except JanteError as exc:
        print(f"jante: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"jante: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
