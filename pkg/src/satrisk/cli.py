"""``satrisk`` command line.

Exit codes: 0 ok, 1 input error, 2 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import evaluator, lumping, simulator
from .evaluator import PIPELINES, NumericalError
from .model import ModelError, chain_to_mdp, induce, parse_model, parse_policy, render_model
from .sat import lift_policy, transform_mdp, transform_process

log = logging.getLogger("satrisk")

SIM_PROCESSES = ("original",) + PIPELINES
SWEEP_PIPELINES = PIPELINES + ("empirical",)


class InputError(Exception):
    pass


def fmt(x: float) -> str:
    """12 significant digits, locale independent; round-off dust prints as 0."""
    if x != x:
        return "nan"
    if abs(x) < 1e-12:
        x = 0.0
    return f"{x:.12g}"


def _load(args):
    try:
        text = Path(args.model).read_text()
    except OSError as exc:
        raise InputError(f"cannot read model file: {exc}") from None
    mdp, policy = parse_model(text)
    if getattr(args, "gamma_override", None) is not None:
        mdp = mdp.with_gamma(args.gamma_override)
    if getattr(args, "policy", None):
        try:
            policy = parse_policy(Path(args.policy).read_text(), mdp)
        except OSError as exc:
            raise InputError(f"cannot read policy file: {exc}") from None
    return mdp, policy


def _need_policy(policy):
    if policy is None:
        raise InputError("no policy: add a 'policy' section to the model or pass --policy FILE")
    return policy


def _emit(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _grid(lo: float, hi: float, step: float) -> List[float]:
    if not lo < hi:
        raise InputError("--from must be smaller than --to")
    if step <= 0:
        raise InputError("--step must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 12) + 0.0 for i in range(n + 1)]


# --------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    mdp, policy = _load(args)
    n_sa = sum(len(mdp.actions[x]) for x in mdp.states)
    _emit(args, (
        f"ok: {len(mdp.states)} states, {len(mdp.all_actions)} actions "
        f"({n_sa} state-action pairs), {len(mdp.reward_support)} reward values, "
        f"gamma {fmt(mdp.gamma)}, policy {'present' if policy else 'absent'}\n"
    ))
    return 0


def cmd_eval(args) -> int:
    mdp, policy = _load(args)
    policy = _need_policy(policy)
    pipelines = args.pipeline or ["sat"]
    results = [evaluator.evaluate(mdp, policy, p) for p in pipelines]
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pipeline", "states", "mean", "variance", "k", "mean_variance_risk", "beta", "utility_taylor"])
        for r in results:
            w.writerow([r.pipeline, len(r.states), fmt(r.mean), fmt(r.variance), fmt(args.k),
                        fmt(r.mean_variance_risk(args.k)), fmt(args.beta), fmt(r.utility_taylor(args.beta))])
        _emit(args, buf.getvalue())
    else:
        lines = []
        for r in results:
            lines += [
                f"pipeline {r.pipeline}",
                f"  states    {len(r.states)}",
                f"  mean      {fmt(r.mean)}",
                f"  variance  {fmt(r.variance)}",
                f"  risk      {fmt(r.mean_variance_risk(args.k))}   (mean - k*sd, k={fmt(args.k)})",
                f"  utility   {fmt(r.utility_taylor(args.beta))}   (mean + beta/2*var, beta={fmt(args.beta)})",
            ]
        _emit(args, "\n".join(lines) + "\n")
    return 0


def _lump(chain, strategy):
    if strategy == "pairwise":
        return lumping.lump_all(chain)
    return lumping.sat_fast_lump(chain)


def cmd_transform(args) -> int:
    mdp, policy = _load(args)
    if args.lump:
        chain = transform_process(mdp, _need_policy(policy))
        report = _lump(chain, args.lump_strategy)
        out_mdp, out_pol = chain_to_mdp(report.merged_chain)
        before, after = report.size_before, report.size_after
    else:
        aug = transform_mdp(mdp)
        out_mdp = aug.mdp
        out_pol = lift_policy(aug, policy) if policy is not None else None
        before = after = len(aug.aug_states)
    _emit(args, render_model(out_mdp, out_pol))
    stats = f"size_before {before}\nsize_after {after}\n"
    # stdout carries the model unless --out is given
    (sys.stdout if args.out else sys.stderr).write(stats)
    return 0


def cmd_lump(args) -> int:
    mdp, policy = _load(args)
    chain = transform_process(mdp, _need_policy(policy))
    report = _lump(chain, args.strategy)
    if args.format == "json":
        _emit(args, json.dumps(report.as_dict(), indent=2) + "\n")
    else:
        lines = [f"strategy {report.strategy}", f"size_before {report.size_before}",
                 f"size_after {report.size_after}"]
        lines += ["class " + " ".join(c) for c in report.classes]
        _emit(args, "\n".join(lines) + "\n")
    return 0


def _process(mdp, policy, which):
    if which == "original":
        return induce(mdp, policy)
    return evaluator.build_chain(mdp, policy, which)


def _horizon(args, mdp) -> int:
    if args.N is not None:
        return args.N
    return simulator.default_horizon(mdp.gamma, max(abs(j) for j in mdp.reward_support))


def cmd_simulate(args) -> int:
    mdp, policy = _load(args)
    proc = _process(mdp, _need_policy(policy), args.process)
    N = _horizon(args, mdp)
    if args.enumerate:
        _emit(args, simulator.enumerate_truncated(proc, N).to_csv())
        return 0
    groups = simulator.run_groups(proc, args.L, args.M, N, args.seed, workers=args.workers, tag=args.process)
    if args.format == "csv":
        _emit(args, groups.to_csv())
    else:
        lines = [f"process {groups.process_tag}  L={groups.L} M={groups.M} N={groups.horizon} seed={groups.seed}"]
        if groups.M >= 2:
            est, err = simulator.empirical_mean_variance(groups, args.k)
            lines.append(f"empirical mean-variance risk (k={fmt(args.k)}) {fmt(est)}  stderr {fmt(err)}")
        est, err = simulator.empirical_utility(groups, args.beta)
        lines.append(f"empirical utility (beta={fmt(args.beta)}) {fmt(est)}  stderr {fmt(err)}")
        _emit(args, "\n".join(lines) + "\n")
    return 0


def sweep_rows(mdp, policy, param: str, values: Sequence[float], pipelines: Sequence[str],
               L: int = 20, M: int = 500, N: int = 200, seed: int = 0, workers: int = 1):
    """Header and rows of a risk sweep; see ``cmd_sweep``."""
    exact = [p for p in pipelines if p != "empirical"]
    results = {p: evaluator.evaluate(mdp, policy, p) for p in exact}
    header = [param] + exact
    empirical = "empirical" in pipelines
    if empirical:
        header += ["empirical", "empirical_stderr"]
        if param == "beta":
            header.append("empirical_limit")
        groups = simulator.run_groups(induce(mdp, policy), L, M, N, seed, workers=workers)
    rows = []
    for x in values:
        row = [x]
        for p in exact:
            r = results[p]
            row.append(r.mean_variance_risk(x) if param == "k" else r.utility_taylor(x))
        if empirical:
            if param == "k":
                row += list(simulator.empirical_mean_variance(groups, x))
            else:
                row += list(simulator.empirical_utility(groups, x)) + [None]
        rows.append(row)
    if empirical and param == "beta":
        col = len(exact) + 1
        for i, x in enumerate(values):
            if x == 0.0 and 0 < i < len(values) - 1:
                # beta = 0 shows the mean of its neighbours; the limit goes in the last column
                rows[i][-1] = rows[i][col]
                rows[i][col] = 0.5 * (rows[i - 1][col] + rows[i + 1][col])
                rows[i][col + 1] = 0.5 * (rows[i - 1][col + 1] + rows[i + 1][col + 1])
    return header, rows


def cmd_sweep(args) -> int:
    mdp, policy = _load(args)
    policy = _need_policy(policy)
    pipelines = args.pipelines.split(",")
    bad = [p for p in pipelines if p not in SWEEP_PIPELINES]
    if bad or not pipelines:
        raise InputError(f"unknown pipelines {bad}; choose from {', '.join(SWEEP_PIPELINES)}")
    values = _grid(args.from_, args.to, args.step)
    N = _horizon(args, mdp)
    header, rows = sweep_rows(mdp, policy, args.param, values, pipelines, args.L, args.M, N, args.seed, args.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else fmt(v) for v in row])
    _emit(args, buf.getvalue())
    return 0


# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="satrisk", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("model", help="model file (YAML/JSON)")
        p.add_argument("--policy", help="policy file overriding the in-model policy")
        p.add_argument("--gamma-override", type=float, dest="gamma_override")
        if out:
            p.add_argument("--out", help="write output here instead of stdout")

    def sim_knobs(p, N_default=None):
        p.add_argument("--L", type=int, default=20, help="number of groups")
        p.add_argument("--M", type=int, default=500, help="simulations per group")
        p.add_argument("--N", type=int, default=N_default, help="horizon (default: tail bound < 1e-7)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", help="parse and validate a model")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="exact mean, variance and risks")
    common(p)
    p.add_argument("--pipeline", action="append", choices=PIPELINES)
    p.add_argument("-k", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=-0.1)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transform", help="write the state-augmented model")
    common(p)
    p.add_argument("--lump", action="store_true")
    p.add_argument("--lump-strategy", choices=("pairwise", "sat-key"), default="sat-key")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("lump", help="report isotopic classes of the augmented chain")
    common(p)
    p.add_argument("--strategy", choices=("pairwise", "sat-key"), default="sat-key")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_lump)

    p = sub.add_parser("simulate", help="Monte-Carlo returns (CSV) or exact truncated distribution")
    common(p)
    sim_knobs(p)
    p.add_argument("--process", choices=SIM_PROCESSES, default="original")
    p.add_argument("--enumerate", action="store_true", help="exact distribution at horizon N instead of samples")
    p.add_argument("-k", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=-0.1)
    p.add_argument("--format", choices=("text", "csv"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="risk along k or beta, one CSV row per value")
    common(p)
    sim_knobs(p)
    p.add_argument("--param", choices=("k", "beta"), required=True)
    p.add_argument("--from", dest="from_", type=float, required=True)
    p.add_argument("--to", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--pipelines", default="sat,simplified,empirical")
    p.add_argument("--format", choices=("csv",), default="csv")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ModelError, lumping.LumpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, simulator.TractabilityError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
