"""Command line front end.

Every run that produces an artifact also writes a manifest next to it with
the resolved configuration, a hash of that configuration, package versions,
and the seeds used, so a result can be traced back to its inputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .builder import build_bounding_chain, verify_assumptions
from .chain import BoundingChain
from .classifier import (check_irreducible, classify, combine, drift_stats)
from .cme import (delta_p0, min_truncation, solve_chain_cme,
                  truncation_certificate)
from .coupling import CoupledSimulator, coupled_ssa
from .errors import ConsistencyError, InfeasibleError, ToolError, ValidationError
from .network import ClassPartition, load_network
from .simulate import estimate_exit, ssa


def parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from exc


def parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_grid(text: str, integer: bool = False) -> np.ndarray:
    """start:stop[:step] inclusive grid."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ValidationError(f"grid must be start:stop[:step], got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        step = float(parts[2]) if len(parts) == 3 else 1.0
    except ValueError as exc:
        raise ValidationError(f"bad grid {text!r}") from exc
    if step <= 0 or hi < lo:
        raise ValidationError(f"bad grid {text!r}")
    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    grid = grid[grid <= hi + 1e-12]
    return grid.astype(int) if integer else grid


def parse_p0(text: str, M: int) -> np.ndarray:
    if text.startswith("delta:"):
        return delta_p0(M, int(text.split(":", 1)[1]))
    raise ValidationError(f"unsupported initial law {text!r}; use delta:<level>")


def _versions() -> dict:
    import scipy
    return {
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
    }


def write_manifest(out_path: Path, command: str, config: dict,
                   seeds=()) -> Path:
    config = {k: v for k, v in sorted(config.items())}
    blob = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "versions": _versions(),
        "seeds": [int(s) for s in seeds],
    }
    path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _load_chain(path: str) -> BoundingChain:
    return BoundingChain.from_csv(path)


def _partition_for(chain: BoundingChain | None, weights: str | None) -> ClassPartition:
    if weights is not None:
        part = ClassPartition(parse_ints(weights))
        if chain is not None and chain.weights and tuple(chain.weights) != part.weights:
            raise ValidationError(
                f"--weights {part.weights} disagrees with the chain file "
                f"{tuple(chain.weights)}"
            )
        return part
    if chain is not None and chain.weights:
        return ClassPartition(tuple(chain.weights))
    raise ValidationError("no weights given and the chain file carries none")


def cmd_build(args) -> int:
    network = load_network(args.network)
    partition = ClassPartition(parse_ints(args.weights))
    chain = build_bounding_chain(
        network, partition, args.direction, l_exact=args.l_exact,
        l_total=args.l_total, tail_degree=args.tail_degree,
    )
    out = Path(args.out)
    chain.to_csv(out)
    write_manifest(out, "build", vars(args))
    print(f"wrote {args.direction} chain for weights {partition.weights} "
          f"to {out} (exact to {chain.l_exact}, trusted to {chain.l_total})")
    return 0


def cmd_verify(args) -> int:
    network = load_network(args.network)
    chain = _load_chain(args.chain)
    partition = _partition_for(chain, args.weights)
    report = verify_assumptions(network, partition, chain, args.l_check)
    if report.ok:
        print(f"verified {chain.direction} bound on [0, {args.l_check}]: "
              f"domination and monotonicity hold")
        return 0
    ce = report.counterexample or {}
    print(f"verification FAILED: {report.detail} "
          f"(kind={ce.get('kind')}, ell={ce.get('ell')}, m={ce.get('m')}, "
          f"witness={ce.get('state')})", file=sys.stderr)
    return 2


def cmd_classify(args) -> int:
    chain = _load_chain(args.chain)
    stats = drift_stats(chain)
    label = classify(stats)
    attestation = check_irreducible(chain)
    doc = {
        "direction": chain.direction,
        "B1": stats.b1,
        "B2": stats.b2,
        "B3": stats.b3,
        "valid": stats.valid,
        "degrees": {str(k): int(v) for k, v in stats.degrees.items()},
        "class": label.label,
        "provenance": label.provenance,
        "notes": list(stats.notes),
        "irreducible": attestation.attested,
        "irreducibility_detail": attestation.detail,
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        write_manifest(Path(args.out), "classify", vars(args))
    print(text)
    return 0


def cmd_combine(args) -> int:
    lower = json.loads(Path(args.lower).read_text())
    upper = json.loads(Path(args.upper).read_text())
    for doc, want, src in ((lower, "lower", args.lower), (upper, "upper", args.upper)):
        if doc.get("direction") not in (want, None):
            raise ValidationError(f"{src} is a {doc.get('direction')} chain, "
                                  f"expected {want}")
    from .classifier import ChainClass
    z = ChainClass(lower["class"], lower.get("provenance") or "external report")
    y = ChainClass(upper["class"], upper.get("provenance") or "external report")
    z_irr = bool(lower.get("irreducible", False)) or args.assume_irreducible
    y_irr = bool(upper.get("irreducible", False)) or args.assume_irreducible
    verdict = combine(z, y, z_irreducible=z_irr, y_irreducible=y_irr)
    doc = {"x_behavior": verdict.label, "detail": verdict.detail,
           "lower_class": z.label, "upper_class": y.label}
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        write_manifest(Path(args.out), "combine", vars(args))
    print(text)
    return 0


def cmd_couple(args) -> int:
    network = load_network(args.network)
    if args.chain:
        chain = _load_chain(args.chain)
        partition = _partition_for(chain, args.weights)
    else:
        if not args.weights:
            raise ValidationError("need --weights when no --chain is given")
        partition = ClassPartition(parse_ints(args.weights))
        chain = build_bounding_chain(network, partition, args.direction,
                                     l_exact=300, l_total=2000)
    x0 = parse_ints(args.x0)
    seeds = [args.seed + i for i in range(args.seeds)]
    sim = CoupledSimulator(network, partition, chain)
    out = Path(args.out)
    d = network.d
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "t"] + [f"x{i+1}" for i in range(d)]
                        + ["class_x", "y"])
        for seed in seeds:
            traj = coupled_ssa(network, partition, chain, x0, args.y0,
                               args.tf, seed=seed, simulator=sim)
            cls = traj.states @ np.asarray(partition.weights, dtype=np.int64)
            for i in range(len(traj)):
                writer.writerow([seed, repr(float(traj.times[i]))]
                                + [int(v) for v in traj.states[i]]
                                + [int(cls[i]), int(traj.levels[i])])
    write_manifest(out, "couple", vars(args), seeds=seeds)
    print(f"wrote {args.seeds} coupled paths to {out}")
    return 0


def cmd_simulate(args) -> int:
    network = load_network(args.network)
    x0 = parse_ints(args.x0)
    if args.stop:
        m = re.fullmatch(r"class\s*>\s*(\d+)", args.stop.strip())
        if not m:
            raise ValidationError(f"unsupported stop rule {args.stop!r}; "
                                  f"use 'class>N'")
        N = int(m.group(1))
        if not args.weights:
            raise ValidationError("stop rule class>N needs --weights")
        partition = ClassPartition(parse_ints(args.weights))
        est = estimate_exit(network, partition, N, args.tf, x0,
                            samples=args.samples, seed=args.seed)
        doc = {"estimate": est.estimate, "lo": est.lo, "hi": est.hi,
               "exits": est.exits, "samples": est.samples, "N": est.N,
               "t_final": est.t_final, "seed": est.seed}
        text = json.dumps(doc, indent=2)
        if args.out:
            Path(args.out).write_text(text + "\n")
            write_manifest(Path(args.out), "simulate", vars(args),
                           seeds=[args.seed])
        print(text)
        return 0
    traj = ssa(network, x0, args.tf, seed=args.seed)
    out = Path(args.out or "trajectory.csv")
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i+1}" for i in range(network.d)])
        for i in range(len(traj)):
            writer.writerow([repr(float(traj.times[i]))]
                            + [int(v) for v in traj.states[i]])
    write_manifest(out, "simulate", vars(args), seeds=[args.seed])
    print(f"wrote one path ({len(traj)} jumps, ended: {traj.reason}) to {out}")
    return 0


def cmd_truncate(args) -> int:
    chain = _load_chain(args.chain)
    p0 = parse_p0(args.p0, args.M)
    cme = solve_chain_cme(chain, args.M, p0, args.tf, budget=args.budget)
    if args.N is not None:
        N = args.N
    elif args.epsilon is not None:
        N = min_truncation(chain, p0, args.M, args.tf, args.epsilon, cme=cme)
    else:
        raise ValidationError("give either --N or --epsilon")
    cert = truncation_certificate(chain, p0, N, args.M, args.tf,
                                  budget=args.budget, cme=cme)
    doc = {
        "N": cert.N, "M": cert.M, "t_final": cert.t_final,
        "mass_deficit": cert.mass_deficit, "initial_tail": cert.initial_tail,
        "flux": cert.flux, "solver_term": cert.solver_term,
        "bound": cert.bound, "bound_clipped": cert.bound_clipped,
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        write_manifest(Path(args.out), "truncate", vars(args))
    print(text)
    return 0


def cmd_plan_truncation(args) -> int:
    chain = _load_chain(args.chain)
    p0 = parse_p0(args.p0, args.M)
    cme = solve_chain_cme(chain, args.M, p0, args.tf, budget=args.budget)
    plan = {}
    for eps in parse_floats(args.epsilons):
        plan[str(eps)] = min_truncation(chain, p0, args.M, args.tf, eps,
                                        cme=cme)
    text = json.dumps({"M": args.M, "t_final": args.tf, "plan": plan},
                      indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        write_manifest(Path(args.out), "plan-truncation", vars(args))
    print(text)
    return 0


def cmd_heatmap(args) -> int:
    chain = _load_chain(args.chain)
    n_grid = parse_grid(args.n_grid, integer=True)
    t_grid = parse_grid(args.t_grid)
    M = int(n_grid.max())
    p0 = parse_p0(args.p0, M)
    t_max = float(t_grid.max()) if len(t_grid) else 0.0
    cme = solve_chain_cme(chain, M, p0, t_max or 1.0, budget=args.budget)
    fine = np.linspace(0.0, t_max, max(2, 16 * len(t_grid)))
    from .cme import QUAD_TOL, _flux_table
    table = _flux_table(cme, fine)  # flux_N on the fine grid
    # running integral of the flux, then read off at the requested times
    cumF = np.concatenate(
        [np.zeros((table.shape[0], 1)),
         np.cumsum(0.5 * (table[:, 1:] + table[:, :-1])
                   * np.diff(fine), axis=1)], axis=1)
    p0_tail = np.concatenate([np.cumsum(p0[::-1])[::-1][1:], [0.0]])
    solver_term = cme.budget + QUAD_TOL
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "N", "E_T_clipped"])
        for t in t_grid:
            deficit = max(0.0, 1.0 - cme.mass(t))
            row_F = np.array([np.interp(t, fine, cumF[N]) for N in n_grid])
            bounds = deficit + p0_tail[n_grid] + row_F + solver_term
            for N, b in zip(n_grid, bounds):
                writer.writerow([repr(float(t)), int(N),
                                 repr(float(min(1.0, max(0.0, b))))])
    write_manifest(out, "heatmap", vars(args))
    print(f"wrote {len(t_grid) * len(n_grid)} certificate values to {out}")
    return 0


def cmd_analyze(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    network = load_network(args.network)
    report: dict = {"network": args.network, "stages": {}}
    status = 0

    def stage(name, fn):
        nonlocal status
        try:
            value = fn()
            report["stages"][name] = {"ok": True}
            return value
        except ToolError as exc:
            report["stages"][name] = {"ok": False, "error": str(exc),
                                      "exit_code": exc.exit_code}
            if status == 0:
                status = exc.exit_code
            return None

    chains = {}
    labels = {}
    for direction, weights in (("lower", args.lower_weights),
                               ("upper", args.upper_weights)):
        partition = ClassPartition(parse_ints(weights))
        chain = stage(f"build-{direction}", lambda p=partition, d=direction:
                      build_bounding_chain(network, p, d,
                                           l_exact=args.l_exact,
                                           tail_degree=3))
        if chain is None:
            continue
        path = out_dir / f"{direction}.csv"
        chain.to_csv(path)
        chains[direction] = chain
        report[f"{direction}_chain"] = str(path)

        def classify_stage(c=chain):
            stats = drift_stats(c)
            label = classify(stats)
            att = check_irreducible(c)
            return {"class": label.label, "provenance": label.provenance,
                    "B1": stats.b1, "B2": stats.b2, "B3": stats.b3,
                    "valid": stats.valid, "irreducible": att.attested}
        info = stage(f"classify-{direction}", classify_stage)
        if info is not None:
            labels[direction] = info
            report[f"{direction}_class"] = info

    if "lower" in labels and "upper" in labels:
        from .classifier import ChainClass

        def combine_stage():
            z = ChainClass(labels["lower"]["class"],
                           labels["lower"]["provenance"])
            y = ChainClass(labels["upper"]["class"],
                           labels["upper"]["provenance"])
            v = combine(z, y,
                        z_irreducible=labels["lower"]["irreducible"],
                        y_irreducible=labels["upper"]["irreducible"])
            return {"x_behavior": v.label, "detail": v.detail}
        verdict = stage("combine", combine_stage)
        if verdict is not None:
            report["verdict"] = verdict

    path = out_dir / "analysis.json"
    path.write_text(json.dumps(report, indent=2, default=str) + "\n")
    write_manifest(path, "analyze", vars(args))
    print(json.dumps(report, indent=2, default=str))
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bounds",
        description="1-D bounding chains for stochastic reaction networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="construct an optimal bounding chain")
    p.add_argument("--network", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--direction", choices=("upper", "lower"), required=True)
    p.add_argument("--l-exact", type=int, default=300)
    p.add_argument("--l-total", type=int, default=None)
    p.add_argument("--tail-degree", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("verify", help="check domination and monotonicity")
    p.add_argument("--network", required=True)
    p.add_argument("--chain", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--l-check", type=int, default=60)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("classify", help="drift statistics and chain class")
    p.add_argument("--chain", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("combine", help="merge lower and upper verdicts")
    p.add_argument("--lower", required=True)
    p.add_argument("--upper", required=True)
    p.add_argument("--assume-irreducible", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_combine)

    p = sub.add_parser("couple", help="simulate network and bound jointly")
    p.add_argument("--network", required=True)
    p.add_argument("--chain", default=None)
    p.add_argument("--weights", default=None)
    p.add_argument("--direction", choices=("upper", "lower"), default="upper")
    p.add_argument("--x0", required=True)
    p.add_argument("--y0", type=int, required=True)
    p.add_argument("--tf", type=float, required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_couple)

    p = sub.add_parser("simulate", help="plain stochastic simulation")
    p.add_argument("--network", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--x0", required=True)
    p.add_argument("--tf", type=float, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--stop", default=None, help="exit rule, e.g. 'class>40'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("truncate", help="certify an exit-probability bound")
    p.add_argument("--chain", required=True)
    p.add_argument("--p0", required=True, help="delta:<level>")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--tf", type=float, required=True)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--budget", type=float, default=1e-8)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_truncate)

    p = sub.add_parser("plan-truncation",
                       help="smallest window per target, one solve")
    p.add_argument("--chain", required=True)
    p.add_argument("--p0", required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--tf", type=float, required=True)
    p.add_argument("--epsilons", required=True, help="e.g. 0.1,0.01")
    p.add_argument("--budget", type=float, default=1e-8)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_plan_truncation)

    p = sub.add_parser("heatmap", help="certificate over a (t, N) grid")
    p.add_argument("--chain", required=True)
    p.add_argument("--p0", required=True)
    p.add_argument("--n-grid", required=True, help="start:stop[:step]")
    p.add_argument("--t-grid", required=True, help="start:stop[:step]")
    p.add_argument("--budget", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_heatmap)

    p = sub.add_parser("analyze", help="build, classify, and combine")
    p.add_argument("--network", required=True)
    p.add_argument("--lower-weights", required=True)
    p.add_argument("--upper-weights", required=True)
    p.add_argument("--l-exact", type=int, default=300)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConsistencyError as exc:
        print(f"inconsistency: {exc}", file=sys.stderr)
        return exc.exit_code
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return exc.exit_code
    except ToolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
