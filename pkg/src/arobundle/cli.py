"""Command-line driver.

Exit codes: 0 success, 1 usage error, 2 invalid instance, 3 solver failure
(including a violated bound order in ``oracle`` mode).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .model import InstanceError, InstanceValidationError, load_instance, save_instance, validate
from .optkernel import SolverError

MODES = ("solve", "adr", "lb", "oracle", "study", "gen")
log = logging.getLogger("arobundle")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="arobundle", description="Two-stage rule bundle solver for "
                "multistage adaptive robust LPs.")
    p.add_argument("mode_pos", nargs="?", choices=MODES, metavar="MODE",
                   help=f"one of {', '.join(MODES)}")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--instance", type=Path, help="instance JSON")
    p.add_argument("--delta-tol", type=float, default=1e-5)
    p.add_argument("--m", type=float, default=0.1)
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--t-min", type=float, default=1e-3)
    p.add_argument("--t-grow", type=float, default=2.0,
                   help="step growth after exact serious steps (1 keeps t nonincreasing)")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--trust-box", type=float, default=1e3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="zero wall times so repeated runs give identical files")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--scenario-cap", type=int, default=64)
    p.add_argument("--T", type=int, default=5, help="periods for study/gen")
    p.add_argument("--seeds", type=int, default=10, help="instance count for study")
    p.add_argument("--budget", type=float, default=None,
                   help="deviation budget for study/gen (default T/2)")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=__version__)
    return p


def _bundle_config(args):
    from .bundle import BundleConfig

    return BundleConfig(delta_tol=args.delta_tol, m=args.m, t0=args.t0, t_min=args.t_min,
                        t_grow=args.t_grow, max_iter=args.max_iter, trust_box=args.trust_box)


def _load(args):
    if args.instance is None:
        raise UsageError("--instance is required for this mode")
    inst = load_instance(args.instance.read_text())
    rep = validate(inst)
    if not rep.ok:
        raise InstanceValidationError(rep.findings)
    return inst


def _inventory_cfg(args):
    from .inventory import default_config

    kw = {} if args.budget is None else {"budget": args.budget}
    return default_config(args.T, **kw)


def _write(path, text):
    path.write_text(text)
    print(f"wrote {path}")


def _policy_doc(ts, xhat):
    x, P, q = ts.imap.split(xhat)
    pol = ts.policy(xhat).to_json()
    return {"x": x.tolist(), "P": pol["P"], "q": pol["q"], "history": pol["history"]}


def cmd_solve(args):
    from .bundle import run
    from .lowerbound import harvest_scenarios, optimality_gap, scenario_lower_bound
    from .transform import build_two_stage

    inst = _load(args)
    ts = build_two_stage(inst, box=args.trust_box)
    sol = run(ts, _bundle_config(args))
    S = harvest_scenarios(sol.log, inst.U, cap=args.scenario_cap)
    lb = scenario_lower_bound(inst, S, cap=args.scenario_cap).value
    try:
        gap = optimality_gap(sol.UB, lb)
    except ZeroDivisionError:
        gap = None
    doc = {"F_star": sol.F, **_policy_doc(ts, sol.xhat), "UB": sol.UB, "LB": lb, "gap": gap,
           "iterations": sol.iterations, "converged": sol.converged}
    _write(args.out_dir / "solution.json", json.dumps(doc, indent=2, sort_keys=True))
    _write(args.out_dir / "iters.csv", sol.write_log_csv(deterministic=args.deterministic))
    if not args.no_plots:
        from .plotting import convergence

        print(f"wrote {convergence(sol.log, args.out_dir / 'convergence.png')}")
    print(f"UB={sol.UB:.10g} LB={lb:.10g} gap={gap} iterations={sol.iterations}")
    return 0


def cmd_adr(args):
    from .transform import build_two_stage, solve_adr

    inst = _load(args)
    adr = solve_adr(inst, box=args.trust_box)
    if adr.status != "optimal":
        raise SolverError(f"affine counterpart {adr.status}")
    ts = build_two_stage(inst, box=args.trust_box)
    doc = {"value": adr.value, **_policy_doc(ts, adr.xhat),
           "Y": [np.asarray(Y).tolist() for Y in adr.Y], "y0": [y.tolist() for y in adr.y0]}
    _write(args.out_dir / "adr.json", json.dumps(doc, indent=2, sort_keys=True))
    print(f"ADR={adr.value:.10g}")
    return 0


def cmd_lb(args):
    from .bundle import run
    from .lowerbound import harvest_scenarios, sample_uniform_scenarios, scenario_lower_bound
    from .transform import build_two_stage

    inst = _load(args)
    sol = run(build_two_stage(inst, box=args.trust_box), _bundle_config(args))
    S = harvest_scenarios(sol.log, inst.U, cap=args.scenario_cap)
    R = sample_uniform_scenarios(inst.U, len(S), seed=args.seed)
    lh = scenario_lower_bound(inst, S, cap=args.scenario_cap).value
    ls = scenario_lower_bound(inst, R, cap=args.scenario_cap).value
    rows = ["source,scenarios,LB", f"harvested,{len(S)},{lh:.10g}", f"sampled,{len(R)},{ls:.10g}",
            f"upper,,{sol.UB:.10g}"]
    _write(args.out_dir / "lb.csv", "\n".join(rows) + "\n")
    _write(args.out_dir / "scenarios.json", S.to_json())
    if not args.no_plots:
        from .plotting import lower_bounds

        lower_bounds([args.seed], [lh], [ls], args.out_dir / "lb.png", upper=[sol.UB])
    print("\n".join(rows))
    return 0


def cmd_oracle(args):
    from .oracle import check_theorem3

    inst = _load(args)
    rep = check_theorem3(inst, config=_bundle_config(args), box=args.trust_box,
                         scenario_cap=args.scenario_cap)
    _write(args.out_dir / "oracle.json", rep.to_json())
    print(f"v_S={rep.v_S:.10g} <= v_TPB={rep.v_TPB:.10g} <= v_ADR={rep.v_ADR:.10g}: "
          f"{'ok' if rep.ok else 'VIOLATED'}")
    for v in rep.violations:
        print(v)
    return 0 if rep.ok else 3


def cmd_study(args):
    from .inventory import study

    rep = study(_inventory_cfg(args), range(args.seed, args.seed + args.seeds),
                bundle_config=_bundle_config(args), scenario_cap=args.scenario_cap)
    text = rep.to_csv(deterministic=args.deterministic)
    _write(args.out_dir / "study.csv", text)
    if not args.no_plots and rep.rows:
        from .plotting import gap_bars

        print(f"wrote {gap_bars(rep, args.out_dir / 'gaps.png')}")
    print(text, end="")
    print(f"average gap tpb={rep.average_gap('tpb'):.6g} adr={rep.average_gap('adr'):.6g} "
          f"failed={len(rep.failures)}")
    return 3 if rep.failures and not rep.rows else 0


def cmd_gen(args):
    from .inventory import generate

    inst = generate(_inventory_cfg(args), args.seed)
    _write(args.out_dir / f"inventory_T{args.T}_seed{args.seed}.json", save_instance(inst))
    return 0


COMMANDS = {"solve": cmd_solve, "adr": cmd_adr, "lb": cmd_lb, "oracle": cmd_oracle,
            "study": cmd_study, "gen": cmd_gen}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        mode = args.mode or args.mode_pos
        if mode is None:
            raise UsageError("a mode is required")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[mode](args)
    except UsageError as exc:
        print(f"arobundle: error: {exc}", file=sys.stderr)
        return 1
    except (InstanceError, InstanceValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"arobundle: invalid instance: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"arobundle: solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
