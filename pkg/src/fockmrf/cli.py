"""Command-line entry point.

Exit codes: 0 success, 1 check failed, 2 validation or parse error,
3 I/O error, 4 capacity or ergodicity problem.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .algebra import MixedState, format_scalar, normal_order, parse_expr, render_expr, to_scalar
from .diagrams import apply_power_directly, evaluate_expansion, expand_power, render_words
from .errors import CapacityError, ConvergenceError, ModeError, ModelError, ReducibilityError, ValidationError
from .exact import (
    build_kernel,
    check_equilibrium_multinomial,
    communication_classes,
    enumerate_states,
    multinomial_state,
    stationary_distribution,
    total_variation,
)
from .model import load_spec, load_spec_file
from .sampler import ChainConfig, empirical_distribution, estimate, run, run_chains
from .update import build_mrf_H, verify_number_conservation

OK, CHECK_FAILED, INVALID, IO_ERROR, CAPACITY = 0, 1, 2, 3, 4


class _Exit(Exception):
    def __init__(self, code, message):
        self.code = code
        self.message = message


def _totals(text: str, spec) -> list:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise _Exit(INVALID, f"--totals: expected comma-separated integers, got {text!r}") from None
    if len(values) == 1 and spec.num_nodes > 1:
        values = values * spec.num_nodes
    for s, occ in spec.clamped.items():
        if s <= len(values):
            values[s - 1] = sum(occ)
    if len(values) != spec.num_nodes:
        raise _Exit(INVALID, f"--totals: {len(values)} values for {spec.num_nodes} nodes")
    return values


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    spec = load_spec_file(args.spec)
    print(f"valid: {spec.num_nodes} node(s), bins {list(spec.bins)}, "
          f"{len(spec.two_cliques)} 2-clique(s), {len(spec.three_cliques)} 3-clique(s), "
          f"{len(spec.clamped)} clamped")
    return OK


def cmd_normal_order(args) -> int:
    text = Path(args.file).read_text() if args.file else " ".join(args.expr)
    if not text.strip():
        raise _Exit(INVALID, "normal-order: give an expression or --file")
    print(render_expr(normal_order(parse_expr(text))))
    return OK


def cmd_exact_stationary(args) -> int:
    spec = load_spec_file(args.spec)
    space = enumerate_states(spec, _totals(args.totals, spec))
    kernel = build_kernel(build_mrf_H(spec), space, args.scheme)
    dist = stationary_distribution(kernel)
    text = json.dumps(dist.records(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return OK


def cmd_equilibrium_check(args) -> int:
    p = [to_scalar(x) for x in args.p]
    if len(p) != args.m:
        raise _Exit(INVALID, f"--p: {len(p)} weights for m={args.m}")
    if any(w < 0 for w in p) or not any(p):
        raise _Exit(INVALID, "--p: weights must be nonnegative and not all zero")
    psi = None
    if args.perturb:
        psi = multinomial_state([w / sum(p) for w in p], args.n)
        first = next(iter(psi.occupancies()))
        psi = psi + MixedState.pure(first, psi.weight(first))
    report = check_equilibrium_multinomial(p, args.m, args.n, psi)
    out = {"lambda": format_scalar(report.eigenvalue), "residual": format_scalar(report.residual)}
    if report.offending is not None:
        out["offending"] = [list(r) for r in report.offending]
    _emit(out)
    return OK if report.ok else CHECK_FAILED


def cmd_verify_conservation(args) -> int:
    spec = load_spec_file(args.spec)
    H = build_mrf_H(spec)
    if args.inject:
        H = H.with_extra(parse_expr(args.inject))
    nodes = [args.node] if args.node else list(range(1, spec.num_nodes + 1))
    failed = False
    for u in nodes:
        if not 1 <= u <= spec.num_nodes:
            raise _Exit(INVALID, f"--node {u} out of range 1..{spec.num_nodes}")
        ok, witness = verify_number_conservation(H, u)
        if ok:
            print(f"[H, N^{u}] = 0")
        else:
            failed = True
            print(f"[H, N^{u}] = {render_expr(witness)}")
    return CHECK_FAILED if failed else OK


def _chain_config(args, spec) -> ChainConfig:
    if args.initial:
        initial = json.loads(args.initial)
        totals = None
    else:
        if not args.totals:
            raise _Exit(INVALID, "give --totals or --initial")
        initial, totals = "random", tuple(_totals(args.totals, spec))
    cfg = ChainConfig(
        seed=args.seed,
        steps=args.steps,
        burn_in=args.burn_in,
        thin=args.thin,
        scheme=args.scheme,
        initial=initial,
        totals=totals,
    )
    try:
        return cfg.resolved(spec)
    except ValueError as exc:
        raise _Exit(INVALID, str(exc)) from None


def cmd_mcmc_run(args) -> int:
    spec = load_spec_file(args.spec)
    cfg = _chain_config(args, spec)
    traces = run_chains(spec, cfg, args.chains)
    out = Path(args.out)
    written = []
    for c, trace in enumerate(traces):
        path = out if len(traces) == 1 else out.with_name(f"{out.stem}_chain{c}{out.suffix}")
        trace.write(path)
        written.append(str(path))
    _emit({"traces": written, "records": [len(t) for t in traces], "burn_in": cfg.burn_in, "thin": cfg.thin})
    return OK


def cmd_compare(args) -> int:
    spec = load_spec_file(args.spec)
    cfg = _chain_config(args, spec)
    space = enumerate_states(spec, list(cfg.totals))
    kernel = build_kernel(build_mrf_H(spec), space, args.scheme)
    comm = communication_classes(kernel)
    print(f"states: {len(space)}  closed classes: {len(comm.closed)}  transient: {len(comm.transient)}  "
          f"period: {comm.period}")
    exact = stationary_distribution(kernel)
    trace = run(spec, cfg)
    emp = empirical_distribution(trace, space)
    tv = total_variation(emp, exact)
    print(f"{'occupancy':<32} {'exact':>10} {'empirical':>10}")
    for occ, pe, pm in zip(space.states, exact.probs, emp.probs):
        print(f"{json.dumps([list(r) for r in occ]):<32} {pe:>10.6f} {pm:>10.6f}")
    est = estimate(trace)
    print("per-bin mean count (batch-means s.e.):")
    for col, m, se in zip(trace.columns, est.mean, est.batch_se):
        print(f"  {col}: {m:.4f} ({se:.4f})")
    passed = tv < args.tol
    print(f"records: {len(trace)}  TV: {tv:.6f}  tol: {args.tol}  {'PASS' if passed else 'FAIL'}")
    return OK if passed else CHECK_FAILED


_TOY_TABLE = [[1, 2], [3, 1]]


def _toy_spec(n: int):
    doc = {
        "nodes": n,
        "bins": [2] * n,
        "source": {str(s): [1, s] for s in range(1, n + 1)},
        "two_cliques": [{"s": s, "t": s + 1, "p": _TOY_TABLE} for s in range(1, n)],
    }
    return load_spec(doc)


def cmd_diagram_expand(args) -> int:
    if args.pieces < 1:
        raise _Exit(INVALID, "--pieces must be positive")
    words = expand_power(args.pieces, args.power)
    print(render_words(words))
    if not args.verify:
        return OK
    H = build_mrf_H(_toy_spec(args.pieces))
    state = MixedState.pure(tuple((1, 1) if s % 2 else (2, 0) for s in range(args.pieces)))
    same = evaluate_expansion(words, H, state) == apply_power_directly(H, state, args.power)
    print(f"verify: {'ok' if same else 'MISMATCH'}")
    return OK if same else CHECK_FAILED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fockmrf", description="Operator-algebra MCMC toolkit for Markov random fields.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("normal-order", help="normal-order an operator expression")
    p.add_argument("expr", nargs="*", help="expression, e.g. \"A[1,1] A'[1,1]\"")
    p.add_argument("--file")
    p.set_defaults(func=cmd_normal_order)

    p = sub.add_parser("exact-stationary", help="stationary law of the exact kernel")
    p.add_argument("--spec", required=True)
    p.add_argument("--totals", required=True, help="per-node sample counts, e.g. 2,2")
    p.add_argument("--scheme", default="random-scan", choices=["random-scan", "sequential-scan"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_exact_stationary)

    p = sub.add_parser("equilibrium-check", help="check H psi = n psi for the multinomial state")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", nargs="+", required=True, help="weights, a/b fractions accepted")
    p.add_argument("--perturb", action="store_true", help="double one coefficient of psi")
    p.set_defaults(func=cmd_equilibrium_check)

    p = sub.add_parser("verify-conservation", help="check [H, N^u] = 0")
    p.add_argument("--spec", required=True)
    p.add_argument("--node", type=int)
    p.add_argument("--inject", help="extra operator expression added to H")
    p.set_defaults(func=cmd_verify_conservation)

    for name, func, help_text in (
        ("mcmc-run", cmd_mcmc_run, "run sampler chains and write traces"),
        ("compare", cmd_compare, "compare the sampler with the exact stationary law"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--spec", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--steps", type=int, default=100000, help="total updates including burn-in")
        p.add_argument("--burn-in", type=int, default=None)
        p.add_argument("--thin", type=int, default=1)
        p.add_argument("--totals")
        p.add_argument("--initial", help="JSON occupancy, e.g. [[2,0],[1,1]]")
        p.add_argument("--scheme", default="random-scan", choices=["random-scan", "sequential-scan"])
        if name == "mcmc-run":
            p.add_argument("--out", required=True)
            p.add_argument("--chains", type=int, default=1)
        else:
            p.add_argument("--tol", type=float, default=0.02)
        p.set_defaults(func=func)

    p = sub.add_parser("diagram-expand", help="expand (I + sum H_s)^k into words")
    p.add_argument("--pieces", type=int, required=True)
    p.add_argument("--power", type=int, required=True)
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_diagram_expand)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Exit as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return INVALID
    except (ModelError, ModeError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return INVALID
    except ReducibilityError as exc:
        print(f"reducible: {exc}", file=sys.stderr)
        return CAPACITY
    except (CapacityError, ConvergenceError) as exc:
        print(f"capacity: {exc}", file=sys.stderr)
        return CAPACITY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return IO_ERROR
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
