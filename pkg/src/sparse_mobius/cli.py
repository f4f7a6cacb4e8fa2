"""Command-line front end.

Every run writes ``manifest.json`` into ``--out-dir``; its ``config`` block can
be fed back with ``--config`` to replay the run.  Exit codes: 0 success,
2 configuration error, 3 oracle failure, 4 incomplete recovery (partial
output is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import metrics
from .core import DimensionError, SparseMobius, brute_force_transform
from .designs import DesignConfig, DesignError, designs_to_json, make_designs
from .peeling import detector_for, run
from .sampling import NoisyOracle, OracleError, SparseOracle, SubprocessOracle
from .synth import (SyntheticSpec, generate, min_b_for_success, sweep_reconstruction, sweep_runtime,
                    sweep_snr)

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE, EXIT_INCOMPLETE = 0, 2, 3, 4

log = logging.getLogger("sparse_mobius")


class ConfigError(ValueError):
    pass


def _ints(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _add_oracle(p, required_n=True):
    p.add_argument("--n", type=int, required=False, help="number of variables")
    p.add_argument("--oracle-cmd", help="command speaking the QUERY/END line protocol")
    p.add_argument("--coeffs", help="JSON coefficient file to use as the function")
    p.add_argument("--oracle-noise", type=float, default=0.0, help="bin-noise std added to a --coeffs oracle")
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--timeout", type=float, default=None)


def _add_design(p):
    p.add_argument("--b", type=int)
    p.add_argument("--C", "--c", dest="C", type=int, default=3)
    p.add_argument("--regime", choices=["uniform", "lowdeg", "noisy"], default="uniform")
    p.add_argument("--t", type=int)
    p.add_argument("--nu", type=float, default=DesignConfig.nu)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--rho", type=float)
    p.add_argument("--c-gt", dest="c_gt", type=float, default=2.0)
    p.add_argument("--c-ver", dest="c_ver", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--overlap", action="store_true")
    p.add_argument("--P", type=int)
    p.add_argument("--eps-ratio", dest="eps_ratio", type=float, default=0.2)
    p.add_argument("--eps-zero", dest="eps_zero", type=float, default=1e-8)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--decoder", choices=["auto", "comp_dd", "lp", "identity"], default="auto")
    p.add_argument("--no-snap", dest="snap", action="store_false")
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.add_argument("--full-rescan", dest="full_rescan", action="store_true")
    p.add_argument("--check-conservation", dest="check_conservation", action="store_true")
    p.add_argument("--ambiguous-fallback", dest="ambiguous_fallback", action="store_true",
                   help="peel ambiguous singletons when nothing else is left (may add false coefficients)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smt", description="Sparse Möbius transform toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option values (flags take precedence)")
        p.add_argument("--seed", type=int, help="defaults to $SMT_SEED, then 0")
        p.add_argument("--out-dir", dest="out_dir", default=".")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--precision", type=int, default=12,
                       help="significant digits in written coefficient files (0 = full)")

    p = sub.add_parser("synth", help="plant a sparse function and write its coefficients")
    common(p)
    p.add_argument("--n", type=int, required=False)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--assumption", choices=["uniform", "lowdeg"], default="uniform")
    p.add_argument("--t", type=int)
    p.add_argument("--value-law", dest="value_law", choices=["uniform", "fixed"], default="uniform")
    p.add_argument("--v-min", dest="v_min", type=float, default=0.1)
    p.add_argument("--rho", type=float, default=1.0)

    p = sub.add_parser("transform", help="sparse transform of a black-box function")
    common(p)
    _add_oracle(p)
    _add_design(p)

    p = sub.add_parser("brute", help="exhaustive transform (n <= 20)")
    common(p)
    _add_oracle(p)

    p = sub.add_parser("metrics", help="Shapley/Banzhaf/degree profile/faithfulness")
    common(p)
    p.add_argument("--coeffs", required=False)
    p.add_argument("--shapley", action="store_true")
    p.add_argument("--banzhaf", action="store_true")
    p.add_argument("--degree", action="store_true")
    p.add_argument("--faithfulness", action="store_true")
    p.add_argument("--reference", help="coefficient file of the true function (for faithfulness)")
    p.add_argument("--oracle-cmd", help="true function as a protocol oracle (for faithfulness)")
    p.add_argument("--samples", type=int, help="estimate faithfulness from this many random masks")

    p = sub.add_parser("sweep-reconstruction", help="exact-recovery rate over n and b")
    common(p)
    p.add_argument("--ns", default="32,64,128")
    p.add_argument("--bs", default="4,5,6,7,8,9")
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--C", "--c", dest="C", type=int, default=3)
    p.add_argument("--trials", type=int, default=20)

    p = sub.add_parser("sweep-snr", help="noisy recovery R² against SNR")
    common(p)
    p.add_argument("--snrs", default="0,5,10,15,20")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--t", type=int, default=5)
    p.add_argument("--b", type=int, default=6)
    p.add_argument("--C", "--c", dest="C", type=int, default=3)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--large-scale", dest="large_scale", action="store_true",
                   help="n = K = 500, identification rows scaled up")

    p = sub.add_parser("sweep-runtime", help="runtime per phase against n")
    common(p)
    p.add_argument("--ns", default="64,128,256,512")
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--b", type=int)
    p.add_argument("--C", "--c", dest="C", type=int, default=3)
    p.add_argument("--t", type=int)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--brute-n", dest="brute_n", type=int)
    return parser


def parse(argv):
    """Parse with config-file values as defaults underneath explicit flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = cfg.get("config", cfg)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**{k: v for k, v in cfg.items() if k not in ("command", "config")})
        args = parser.parse_args(argv)
    if args.seed is None:
        env = os.environ.get("SMT_SEED")
        try:
            args.seed = int(env) if env else 0
        except ValueError as exc:
            raise ConfigError(f"SMT_SEED must be an integer, got {env!r}") from exc
    return args


# ---------------------------------------------------------------------------

def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def _manifest(args, outputs, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    man = {"command": args.command, "config": cfg, "outputs": sorted(outputs)}
    if extra:
        man.update(extra)
    _write_json(_out(args) / "manifest.json", man)


def _oracle(args):
    if bool(args.oracle_cmd) == bool(args.coeffs):
        raise ConfigError("give exactly one of --oracle-cmd or --coeffs")
    if args.coeffs:
        F = SparseMobius.load(args.coeffs)
        if args.n is not None and args.n != F.dim:
            raise ConfigError(f"--n {args.n} does not match coefficient dimension {F.dim}")
        args.n = F.dim
        oracle = SparseOracle(F)
        if args.oracle_noise:
            oracle = NoisyOracle(oracle, args.oracle_noise, seed=args.seed)
        return oracle
    if args.n is None:
        raise ConfigError("--n is required with --oracle-cmd")
    return SubprocessOracle(args.oracle_cmd, args.n, batch_size=args.batch_size, timeout=args.timeout)


def cmd_synth(args) -> int:
    if args.n is None:
        raise ConfigError("--n is required")
    spec = SyntheticSpec(args.n, args.K, args.assumption, args.t, args.value_law, args.v_min, args.rho,
                         seed=args.seed)
    F, _ = generate(spec)
    out = _out(args)
    F.save(out / "truth.json", args.precision or None)
    _manifest(args, ["truth.json"], {"spec": asdict(spec)})
    print(out / "truth.json")
    return EXIT_OK


def cmd_transform(args) -> int:
    oracle = _oracle(args)
    if args.b is None:
        raise ConfigError("--b is required")
    cfg = DesignConfig(n=args.n, b=args.b, C=args.C, regime=args.regime, t=args.t, nu=args.nu,
                       gamma=args.gamma, sigma=args.sigma, rho=args.rho, seed=args.seed, c_gt=args.c_gt,
                       c_ver=args.c_ver, beta=args.beta, overlap=args.overlap, P=args.P)
    det = detector_for(cfg, eps_ratio=args.eps_ratio, eps_zero=args.eps_zero, lam=args.lam,
                       decoder=args.decoder, snap=args.snap)
    designs = make_designs(cfg)
    try:
        res = run(oracle, designs, det, max_rounds=args.max_rounds, full_rescan=args.full_rescan,
                  track_conservation=args.check_conservation, batch_size=args.batch_size,
                  seed=args.seed, config_digest=cfg.digest(), ambiguous_fallback=args.ambiguous_fallback)
    finally:
        oracle.close()
    out = _out(args)
    res.F.save(out / "coeffs.json", args.precision or None)
    _write_json(out / "report.json", res.report)
    with open(out / "designs.json", "w") as fh:
        fh.write(designs_to_json(designs))
    _manifest(args, ["coeffs.json", "report.json", "designs.json"],
              {"design": asdict(cfg), "detector": asdict(det), "config_digest": cfg.digest()})
    print(json.dumps({k: res.report[k] for k in ("recovered", "unique_queries", "rounds", "complete")}))
    return EXIT_OK if res.complete else EXIT_INCOMPLETE


def cmd_brute(args) -> int:
    oracle = _oracle(args)
    try:
        F = brute_force_transform(oracle, args.n)
    finally:
        oracle.close()
    out = _out(args)
    F.save(out / "coeffs.json", args.precision or None)
    _manifest(args, ["coeffs.json"], {"samples": 1 << args.n})
    print(out / "coeffs.json")
    return EXIT_OK


def cmd_metrics(args) -> int:
    if not args.coeffs:
        raise ConfigError("--coeffs is required")
    F = SparseMobius.load(args.coeffs)
    out = _out(args)
    outputs = []
    if args.shapley or args.banzhaf or not (args.degree or args.faithfulness):
        both = not (args.shapley or args.banzhaf)
        metrics.write_attribution_csv(out / "attributions.csv", F, args.shapley or both, args.banzhaf or both)
        outputs.append("attributions.csv")
    if args.degree:
        metrics.write_degree_csv(out / "degree_profile.csv", F)
        outputs.append("degree_profile.csv")
    extra = {}
    if args.faithfulness:
        if bool(args.reference) == bool(args.oracle_cmd):
            raise ConfigError("faithfulness needs exactly one of --reference or --oracle-cmd")
        oracle = (SparseOracle(SparseMobius.load(args.reference, F.dim)) if args.reference
                  else SubprocessOracle(args.oracle_cmd, F.dim))
        try:
            fit = metrics.faithfulness(F, oracle, "sampled" if args.samples else "exact",
                                       N=args.samples or 0, seed=args.seed)
        finally:
            oracle.close()
        _write_json(out / "faithfulness.json", fit.to_dict())
        outputs.append("faithfulness.json")
        extra["faithfulness"] = fit.to_dict()
        print(f"R2 = {fit.r2:.6g}")
    _manifest(args, outputs, extra)
    return EXIT_OK


def _sweep_out(args, res):
    out = _out(args)
    name = f"sweep_{res.name}_{res.digest()}"
    res.to_csv(out / f"{name}.csv")
    _write_json(out / f"{name}.json", res.manifest())
    _manifest(args, [f"{name}.csv", f"{name}.json"])
    return out / f"{name}.csv"


def cmd_sweep_reconstruction(args) -> int:
    res = sweep_reconstruction(_ints(args.ns), _ints(args.bs), args.K, args.trials, args.C, args.seed,
                               args.threads)
    res.extras["min_b_90"] = {str(k): v for k, v in min_b_for_success(res).items()}
    print(_sweep_out(args, res))
    return EXIT_OK


def cmd_sweep_snr(args) -> int:
    kw = {}
    if args.large_scale:
        args.n, args.K, args.b = 500, 500, 10
        # about 1000 delay rows: 600 identification plus two blocks of 200
        lg = math.log2(args.n) * args.t
        kw = {"c_gt": 300 / lg, "c_ver": 200 / lg}
    res = sweep_snr(_floats(args.snrs), args.n, args.K, args.t, args.b, args.C, args.trials, args.rho,
                    args.seed, args.threads, **kw)
    print(_sweep_out(args, res))
    return EXIT_OK


def cmd_sweep_runtime(args) -> int:
    res = sweep_runtime(_ints(args.ns), args.K, args.b, args.C, args.t, args.trials, args.seed,
                        args.brute_n, args.threads)
    print(f"log-log slope: {res.extras['loglog_slope']:.3f}")
    print(_sweep_out(args, res))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "transform": cmd_transform,
    "brute": cmd_brute,
    "metrics": cmd_metrics,
    "sweep-reconstruction": cmd_sweep_reconstruction,
    "sweep-snr": cmd_sweep_snr,
    "sweep-runtime": cmd_sweep_runtime,
}


def main(argv=None) -> int:
    try:
        args = parse(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        # argparse exits with 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (ConfigError, DesignError, DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
