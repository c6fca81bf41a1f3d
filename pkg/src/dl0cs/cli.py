"""Command-line entry point: ``python -m dl0cs <command> ...``."""

import argparse
import json
import sys

from . import experiments as ex
from . import stability as st
from .errors import InvalidParameterError
from .signal import dump_instance, load_instance, make_instance, partition_uniform

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# flag -> config key; values are parsed with the config field types
CONFIG_FLAGS = {
    "--n": "n", "--m": "m", "--k": "k", "--sigma": "sigma",
    "--p": "p", "--p-links": "p_links", "--topology-seed": "topology_seed",
    "--variant": "variant", "--mu": "mu", "--xi": "xi", "--delta": "delta", "--tau": "tau",
    "--q": "q", "--max-iterations": "max_iterations", "--record-every": "record_every",
    "--seed": "seed", "--runs": "runs", "--workers": "workers",
}


def _add_common(sub):
    sub.add_argument("--config", help="flat key = value file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override any config key (repeatable)")
    for flag in CONFIG_FLAGS:
        sub.add_argument(flag, dest="cfg_" + CONFIG_FLAGS[flag])
    sub.add_argument("--no-adapt-exchange", action="store_true")
    sub.add_argument("--no-stop", action="store_true", help="disable the sparsity stop rule")


def build_parser():
    parser = _Parser(prog="dl0cs", description="Diffusion l0-LMS compressive sensing over networks")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("gen", help="write a problem instance file")
    _add_common(p)
    p.add_argument("--out", required=True)

    p = subs.add_parser("run", help="single reconstruction run")
    _add_common(p)
    p.add_argument("--instance", help="instance file from `gen`")
    p.add_argument("--out", help="learning-curve CSV (default: stdout)")
    p.add_argument("--summary", help="JSON summary path (default: stderr)")

    p = subs.add_parser("mc", help="Monte-Carlo learning curve and success rate")
    _add_common(p)
    p.add_argument("--out", help="averaged learning-curve CSV (default: stdout)")
    p.add_argument("--runs-out", help="per-run CSV")
    p.add_argument("--summary", help="JSON summary path (default: stderr)")

    p = subs.add_parser("mumax", help="empirical largest step size")
    _add_common(p)
    p.add_argument("--runs-per-point", type=int, default=5)
    p.add_argument("--range", nargs=2, type=float, default=(0.05, 10.0), metavar=("LOW", "HIGH"))
    p.add_argument("--mode", choices=("success", "no-divergence"), default="success")
    p.add_argument("--rel-tol", type=float, default=0.05)

    p = subs.add_parser("analyze", help="stability report")
    _add_common(p)
    p.add_argument("--mus", help="comma-separated step sizes to classify")
    p.add_argument("--gamma", action="store_true", help="also run the period-product test")
    p.add_argument("--check-theorems", action="store_true")
    p.add_argument("--trials", type=int, default=100)

    p = subs.add_parser("sweep", help="Monte Carlo across values of one parameter")
    _add_common(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated")
    p.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def config_from_args(args):
    pairs = []
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        pairs.append(tuple(item.split("=", 1)))
    for key in CONFIG_FLAGS.values():
        value = getattr(args, "cfg_" + key)
        if value is not None:
            pairs.append((key, value))
    overrides = ex.parse_assignments(pairs)
    if args.no_adapt_exchange:
        overrides["adapt_exchange"] = False
    if args.no_stop:
        overrides["use_stop_criterion"] = False
    return ex.load_config(args.config, overrides)


def _write(path, text):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_summary(path, record):
    text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def cmd_gen(cfg, args):
    inst = make_instance(cfg.n, cfg.m, cfg.k, cfg.sigma, ex.run_seed(cfg, 0))
    dump_instance(inst, args.out)
    return EXIT_OK


def cmd_run(cfg, args):
    instance = None
    if args.instance:
        instance = load_instance(args.instance)
        cfg = cfg.replace(n=instance.n, m=instance.m, k=instance.signal.sparsity,
                          sigma=instance.noise_sigma)
    weights = ex.build_weights(cfg)
    mu = ex.resolve_mu(cfg, weights)
    res = ex.single_run(cfg, 0, mu, weights, instance)
    if res.error is not None:
        raise RuntimeError(res.error)
    _write(args.out, ex.run_curve_csv(res))
    _emit_summary(args.summary, {**res.record(), "mu": mu})
    return EXIT_DIVERGED if res.stop_reason == "divergence" else EXIT_OK


def cmd_mc(cfg, args):
    res = ex.monte_carlo(cfg)
    _write(args.out, ex.mc_curve_csv(res))
    if args.runs_out:
        _write(args.runs_out, ex.runs_csv(res.runs))
    _emit_summary(args.summary, {
        "final_msd_db": res.final_msd_db, "success_rate": res.success_rate, "mu": res.mu,
        "runs": len(res.runs), "iterations_mean": res.iterations_mean, "seed": cfg.seed,
        "elapsed_seconds": res.wall_time,
        "failed_runs": [r.run_index for r in res.runs if r.error is not None]})
    return EXIT_OK


def cmd_mumax(cfg, args):
    res = ex.empirical_mu_max(cfg, args.runs_per_point, tuple(args.range), args.mode, args.rel_tol)
    for mu, frac in res.evaluations:
        print(f"mu={mu:.6g} pass_fraction={frac:.3f}")
    if res.found:
        note = " (upper end of range)" if res.hit_upper_end else ""
        print(f"mu_max: {res.value:.6g}{note}")
    else:
        print("mu_max: not-found")
    return EXIT_OK


def cmd_analyze(cfg, args):
    weights = ex.build_weights(cfg)
    mus = [float(v) for v in args.mus.split(",")] if args.mus else []
    gamma_inputs = None
    if args.gamma:
        inst = make_instance(cfg.n, cfg.m, cfg.k, cfg.sigma, ex.run_seed(cfg, 0))
        gamma_inputs = (inst, partition_uniform(inst, cfg.p), weights)
    rep = st.stability_report(ex.combination_matrix(weights), weights.s_matrix, cfg.n, cfg.m,
                              mus, gamma_inputs)
    sys.stdout.write(rep.to_text())
    sys.stdout.write(f"safe_mu: {ex.SAFE_FRACTION * rep.mu_exact:.12g}\n")
    if args.check_theorems:
        for check in (st.verify_theorem1, st.verify_theorem2, st.verify_theorem3):
            r = check(trials=args.trials, seed=cfg.seed)
            print(f"{r.name}: {'pass' if r.passed else 'FAIL'} trials={r.trials} "
                  f"violations={r.violations} max_gap={r.max_violation:.3e}")
    return EXIT_OK


def cmd_sweep(cfg, args):
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values is empty")
    rows = ex.sweep(cfg, args.param, [float(v) for v in values])
    _write(args.out, ex.sweep_csv(rows))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "mc": cmd_mc, "mumax": cmd_mumax,
            "analyze": cmd_analyze, "sweep": cmd_sweep}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, InvalidParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
