"""Command-line front end.

    python3 -m smoothretrack simulate --out echoes.altw [--config run.ini] [--seed N]
    python3 -m smoothretrack fit echoes.altw --algo cd --kind brown --out results/cd
    python3 -m smoothretrack bench-table1 --seed 0 --out table1.csv
    python3 -m smoothretrack --dump-config

Exit codes: 0 success, 1 usage or I/O error, 2 estimator stopped at its
iteration cap, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import cd, fileio, hmc, least_squares, metrics
from .config import ConfigError, RunConfig, dump_config, load_config
from .core import StopReason, ValidationError, validate
from .models import ModelKind
from .simulate import generate

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_NUMERICAL = 0, 1, 2, 3

# acceptance bands of the synthetic benchmark (CD-BM row, LS-BM row)
BANDS = {"cd_std_swh_cm": 6.0, "cd_std_tau_cm": 2.5, "cd_std_pu": 1.5, "cd_abs_bias_tau_cm": 0.5,
         "ls_std_swh_cm_min": 20.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run configuration file ([instrument] [scenario] [hyper] [chain])")
    common.add_argument("--seed", type=int, help="random seed (overrides the configuration)")
    common.add_argument("--threads", type=int, help="BLAS threads used by the estimators")
    common.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration and exit")

    p = _Parser(prog="smoothretrack", description="Altimetric waveform retracking toolkit.",
                parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate an echo sequence")
    s.add_argument("--out", required=True, help="output file (.altw binary or .csv)")
    s.add_argument("--kind", choices=[k.value for k in ModelKind], help="waveform model")

    f = sub.add_parser("fit", parents=[common], help="retrack an echo file")
    f.add_argument("input", help="ALTW or CSV echo file")
    f.add_argument("--algo", choices=["cd", "ls", "hmc"], default="cd")
    f.add_argument("--kind", choices=[k.value for k in ModelKind], default="brown")
    f.add_argument("--out", required=True, help="output prefix for <prefix>.csv and <prefix>.json")
    f.add_argument("--chain-out", help="also dump the HMC samples to this binary file")

    b = sub.add_parser("bench-table1", parents=[common],
                       help="LS / CD / HMC comparison table on the default scenario")
    b.add_argument("--out", help="CSV file for the table")
    b.add_argument("--no-hmc", action="store_true", help="skip the (slow) sampler row")
    return p


# --------------------------------------------------------------- helpers ---

def _config(args) -> RunConfig:
    if args.config:
        try:
            return load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    return RunConfig()


def _run_fit(algo, seq, cfg: RunConfig, kind, chain_seed=None):
    inst = cfg.instrument
    if algo == "cd":
        return cd.fit(seq, cfg.hyper, inst, kind=kind), None
    if algo == "ls":
        return least_squares.fit_ls(seq, inst, kind=kind, t_max=cfg.hyper.t_max), None
    chain = cfg.chain if chain_seed is None else cfg.chain.with_(seed=chain_seed)
    res = hmc.sample_posterior(seq, cfg.hyper, inst, kind=kind, chain=chain)
    return res.report, res


def _row(name, rep, seq, g2m):
    t = seq.truth
    e = rep.theta_hat
    row = {"algorithm": name}
    if t is not None:
        row.update({
            "bias_swh_cm": 100 * metrics.bias(e.swh, t.swh),
            "bias_tau_cm": 100 * g2m * metrics.bias(e.tau, t.tau),
            "bias_pu": metrics.bias(e.pu, t.pu),
            "std_swh_cm": 100 * metrics.std_vs_truth(e.swh, t.swh),
            "std_tau_cm": 100 * g2m * metrics.std_vs_truth(e.tau, t.tau),
            "std_pu": metrics.std_vs_truth(e.pu, t.pu),
        })
    if seq.truth_noise is not None:
        mu_true, L = seq.truth_noise
        row["bias_mu_1e4"] = 1e4 * metrics.bias(rep.noise_hat.mu, mu_true)
        row["std_mu_1e4"] = 1e4 * metrics.std_vs_truth(rep.noise_hat.mu, mu_true)
        row["enl_mean"] = float(np.mean(rep.enl))
        row["enl_bias"] = float(np.mean(rep.enl)) - L
    row["ms_per_echo"] = 1e3 * rep.wall_time / seq.M
    return row


# ------------------------------------------------------------ subcommands --

def cmd_simulate(args, cfg: RunConfig) -> int:
    spec = cfg.scenario
    if args.kind:
        spec = type(spec)(**{**spec.__dict__, "kind": args.kind})
    sc = spec.build(seed=args.seed)
    seq = generate(sc, cfg.instrument)
    try:
        fileio.write_echoes(args.out, seq)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
    t = seq.truth
    print(f"simulated {seq.M} echoes x {seq.K} gates ({sc.kind.value}, L={sc.L:g}, mu={sc.mu:g}, "
          f"seed={sc.seed}, r={sc.block_size}) -> {args.out}")
    print(f"  swh {t.swh.min():.3f}..{t.swh.max():.3f} m, tau {t.tau.min():.3f}..{t.tau.max():.3f} gates, "
          f"pu {t.pu.min():.3f}..{t.pu.max():.3f}")
    return EXIT_OK


def cmd_fit(args, cfg: RunConfig) -> int:
    try:
        seq = fileio.read_echoes(args.input, cfg.scenario.block_size, cfg.scenario.pad)
    except FileNotFoundError:
        raise UsageError(f"input file not found: {args.input}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    except fileio.FormatError as exc:
        raise UsageError(f"{args.input}: {exc}") from None
    validate(seq, cfg.instrument)
    seed = args.seed if args.seed is not None else None
    rep, chain = _run_fit(args.algo, seq, cfg, ModelKind(args.kind), seed)
    try:
        csv_path, diag_path = fileio.write_report(args.out, rep)
        if chain is not None and args.chain_out:
            fileio.write_chain(args.chain_out, chain.flat())
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
    print(f"{args.algo}-{args.kind}: {rep.iterations} iterations, stop={rep.stop_reason.value}, "
          f"{rep.wall_time:.2f} s, mean ENL {np.mean(rep.enl):.1f}")
    if seq.truth is not None:
        r = _row(args.algo, rep, seq, cfg.instrument.gate_to_metres)
        print("  STD swh {std_swh_cm:.2f} cm, tau {std_tau_cm:.2f} cm, pu {std_pu:.3f}; "
              "bias tau {bias_tau_cm:.2f} cm".format(**r))
    print(f"  wrote {csv_path} and {diag_path}")
    if args.algo != "hmc" and rep.stop_reason is StopReason.MAX_ITER:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_bench_table1(args, cfg: RunConfig) -> int:
    seed = cfg.scenario.seed if args.seed is None else args.seed
    sc = cfg.scenario.build(seed=seed)
    inst = cfg.instrument
    seq = generate(sc, inst)
    g2m = inst.gate_to_metres
    rows, reps = [], {}
    algos = ["ls", "cd"] + ([] if args.no_hmc else ["hmc"])
    for algo in algos:
        rep, _ = _run_fit(algo, seq, cfg, ModelKind.BROWN, seed)
        reps[algo] = rep
        rows.append(_row(f"{algo.upper()}-BM", rep, seq, g2m))
    header = list(rows[0])
    print(",".join(header))
    for r in rows:
        print(",".join(r[k] if isinstance(r[k], str) else f"{r[k]:.4g}" for k in header))
    if args.out:
        try:
            fileio.write_table(args.out, rows)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
    cdr, lsr = rows[1], rows[0]
    checks = {
        "std_swh": cdr["std_swh_cm"] <= BANDS["cd_std_swh_cm"],
        "std_tau": cdr["std_tau_cm"] <= BANDS["cd_std_tau_cm"],
        "std_pu": cdr["std_pu"] <= BANDS["cd_std_pu"],
        "bias_tau": abs(cdr["bias_tau_cm"]) <= BANDS["cd_abs_bias_tau_cm"],
        "ls_std_swh": lsr["std_swh_cm"] >= BANDS["ls_std_swh_cm_min"],
        "cd_faster": cdr["ms_per_echo"] < lsr["ms_per_echo"],
    }
    ok = all(checks.values())
    detail = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
    print(f"{'PASS' if ok else 'FAIL'} table1 seed={seed}: {detail}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "bench-table1": cmd_bench_table1}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _config(args)
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        limits = None
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            limits = threadpool_limits(args.threads)
        try:
            return COMMANDS[args.command](args, cfg)
        finally:
            if limits is not None:
                limits.unregister()
    except (UsageError, ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (cd.IllConditionedFisher, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
