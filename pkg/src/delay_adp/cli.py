"""delay-adp command line.

    delay-adp <simulate|model-pi|data-pi|compare|noise-study>
              [--config PATH] [--benchmark metal-cutting|cav] [--seed N] [--out DIR]

Exit codes: 0 success, 2 config error, 3 excitation failure, 4 numerical failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import BENCHMARKS, ExperimentConfig
from .errors import ConfigError, ExcitationError, NumericalError
from .model_pi import write_steps_json
from .semidisc import write_comparison_csv

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_EXCITATION, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("delay_adp")


def _law_summary(law):
    return {"K0": law.K0.tolist(), "K1_sup": float(np.max(np.abs(law.K1))), "G": law.G}


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_simulate(cfg, out):
    trajs = ex.collect_episodes(cfg)
    files = []
    for e, traj in enumerate(trajs):
        name = f"trajectory_{e:03d}.csv"
        traj.to_csv(out / name)
        files.append(name)
    return {"episodes": len(trajs), "files": files,
            "samples_per_episode": int(trajs[0].x.shape[0]),
            "initial_cost": ex.policy_cost(cfg, cfg.initial_law()).cost}


def cmd_model_pi(cfg, out):
    steps = ex.model_pi(cfg)
    write_steps_json(steps, out / "model_pi_iterates.json", include_kernel=cfg.system.n <= 2)
    _write_csv(out / "model_pi_residuals.csv",
               ["iteration", "solve_residual", "riccati_residual", "gain_change"],
               [[i + 1, s.solve_residual, s.riccati_residual, s.gain_change] for i, s in enumerate(steps)])
    final = steps[-1].improved
    return {"iterations": len(steps), "final_law": _law_summary(final),
            "riccati_residual": steps[-1].riccati_residual,
            "cost": ex.policy_cost(cfg, final).cost}


def cmd_data_pi(cfg, out):
    res = ex.data_pi(cfg)
    res.to_json(out / "data_pi_iterates.json")
    _write_csv(out / "upsilon_convergence.csv",
               ["iteration", "upsilon_change", "residual", "min_eig", "rank", "cost"],
               [[i + 1, it.change, it.residual, it.min_eig, it.rank, ex.policy_cost(cfg, it.law).cost]
                for i, it in enumerate(res.iterates)])
    return {"iterations": len(res.iterates), "converged": res.converged,
            "final_law": _law_summary(res.final_law),
            "residual": res.iterates[-1].residual, "min_eig": res.iterates[-1].min_eig,
            "initial_cost": ex.policy_cost(cfg, cfg.initial_law()).cost,
            "cost": ex.policy_cost(cfg, res.final_law).cost}


def cmd_compare(cfg, out):
    rows = ex.compare(cfg)
    write_comparison_csv(out / "comparison.csv", rows)
    return {"rows": rows}


def cmd_noise_study(cfg, out):
    rows = ex.noise_study(cfg)
    _write_csv(out / "noise_study.csv", ["sigma", "variance", "iterations", "converged", "cost"],
               [[r["sigma"], r["variance"], r["iterations"], r["converged"], r["cost"]] for r in rows])
    return {"rows": rows}


COMMANDS = {"simulate": cmd_simulate, "model-pi": cmd_model_pi, "data-pi": cmd_data_pi,
            "compare": cmd_compare, "noise-study": cmd_noise_study}


def build_parser():
    p = argparse.ArgumentParser(prog="delay-adp", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--benchmark", choices=BENCHMARKS, help="named benchmark (overridden by --config fields)")
    p.add_argument("--seed", type=int, help="random seed for histories, exploration and noise")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return d


def load_config(args):
    """--config fields override the --benchmark defaults; --seed and --out override both."""
    if not (args.config or args.benchmark):
        raise ConfigError("give --config or --benchmark")
    d = _read_json(args.config) if args.config else {}
    if args.benchmark:
        d["benchmark"] = args.benchmark
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["out_dir"] = args.out
    return ExperimentConfig.from_dict(d)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    summary = {"schema": SCHEMA, "command": args.command, "status": "ok"}
    code = EXIT_OK
    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary.update(benchmark=cfg.name, seed=cfg.seed)
        cfg.save(out / "config.json")
        summary["result"] = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        code, summary["status"], summary["error"] = EXIT_CONFIG, "config-error", str(exc)
    except ExcitationError as exc:
        code, summary["status"], summary["error"] = EXIT_EXCITATION, "excitation-failure", str(exc)
    except NumericalError as exc:
        code, summary["status"], summary["error"] = EXIT_NUMERICAL, "numerical-failure", str(exc)
    if code != EXIT_OK:
        print(f"delay-adp: {summary['error']}", file=sys.stderr)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
    print(json.dumps(summary, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
