"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .augment import PRESETS, AugmentationConfig
from .checkpoint import CheckpointError, ConfigMismatchError, save_checkpoint
from .evaluation import (
    TABLE2_ROWS,
    TIMING_NOTE,
    ablation_run,
    evaluate_checkpoint,
    hybrid_bench,
    timing_bench,
    write_csv,
)
from .graph import from_system
from .inference import NeuralSolver
from .mmio import MatrixMarketError, read_matrix, read_vector, write_vector
from .model import ModelConfig
from .solvers import NotPositiveDefiniteError, relative_residual
from .sparse import condition_estimate, graph_diameter_info
from .training import DegenerateLossError, TrainConfig, grad_check, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("graphsolver")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _model_args(p):
    p.add_argument("--preset", default="cg", choices=sorted(PRESETS), help="augmentation preset")
    p.add_argument("--steps", type=int, default=14, help="iterations per augmentation family")
    p.add_argument("--d", type=int, default=32, help="inner feature width")
    p.add_argument("--blocks", type=int, default=4, help="number of residual blocks")


def _train_args(p):
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="BLAS threads; 1 gives bitwise-reproducible runs")
    common.add_argument("--config", type=Path, help="JSON file with default values for this command's options")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="graphsolver", description="Learned approximate solvers for sparse symmetric systems.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-dataset", parents=[common], help="generate a synthetic SPD corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--generator", choices=("grid", "random-spd"), default="grid")
    p.add_argument("--n-min", type=int, default=50)
    p.add_argument("--n-max", type=int, default=200)
    p.add_argument("--density", type=float, default=0.05, help="random-spd only")
    p.add_argument("--wide-scale", action="store_true", help="log-uniform solution magnitudes in [1e-8, 1]")
    p.add_argument("--fractions", type=float, nargs=3, default=(0.8, 0.1, 0.1))

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", type=Path, required=True, help="directory with train/val manifests")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--log", type=Path, help="append per-epoch metrics to this CSV")
    p.add_argument("--loss", choices=("cos", "cos+res"), default="cos+res")
    _model_args(p)
    _train_args(p)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--csv", type=Path, help="per-sample results")
    p.add_argument("--trace", action="store_true", help="print pipeline stage digests")

    p = sub.add_parser("solve", parents=[common], help="approximately solve one system")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--matrix", type=Path, required=True)
    p.add_argument("--rhs", type=Path, help="right-hand side; synthesized as A x with x ~ U[-1, 1] if omitted")
    p.add_argument("--output", type=Path, help="write x_hat as Matrix Market")

    p = sub.add_parser("bench", parents=[common], help="network vs CG wall time")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--delta", type=float, help="fixed CG target; default matches the network per sample")
    p.add_argument("--limit", type=int, help="only the first N samples")
    p.add_argument("--csv", type=Path)

    p = sub.add_parser("hybrid-bench", parents=[common], help="CG iterations from zero vs network init")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--targets", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4, 1e-5])
    p.add_argument("--csv", type=Path)

    p = sub.add_parser("ablate", parents=[common], help="loss/augmentation ablation grid")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--rows", nargs="+", help="LOSS:PRESET pairs; default is the full 7-row grid")
    p.add_argument("--csv", type=Path)
    p.add_argument("--steps", type=int, default=14)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--blocks", type=int, default=4)
    _train_args(p)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient check")
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds starting at --seed")
    p.add_argument("--threshold", type=float, default=1e-4)

    p = sub.add_parser("inspect", parents=[common], help="size, diameter and conditioning of a system")
    p.add_argument("--matrix", type=Path, required=True)
    p.add_argument("--rhs", type=Path)
    p.add_argument("--dump-limit", type=int, default=20, help="print the graph listing up to this many nodes")
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            defaults = json.loads(args.config.read_text())
        except OSError:
            raise
        except ValueError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(defaults, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(defaults) - known
        if unknown:
            raise UsageError(f"{args.config}: unknown option(s) {sorted(unknown)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _load_split(data, name):
    path = Path(data) / f"{name}.manifest"
    return ds.load_manifest_samples(path) if path.exists() else []


def cmd_gen_dataset(args):
    if args.generator == "grid":
        samples = ds.generate_grid_dataset(args.count, (args.n_min, args.n_max), args.seed, wide_scale=args.wide_scale)
    else:
        seeds = np.random.SeedSequence(args.seed).generate_state(args.count, dtype=np.uint64)
        rng = ds.make_rng(args.seed)
        samples = [ds.generate_random_spd(int(rng.integers(args.n_min, args.n_max + 1)), args.density, int(s),
                                          wide_scale=args.wide_scale) for s in seeds]
    gen = dict(generator=args.generator, count=args.count, n_range=[args.n_min, args.n_max], seed=args.seed,
               density=args.density, wide_scale=args.wide_scale)
    paths = ds.write_dataset(args.out, samples, args.fractions, args.seed, gen)
    for name, path in paths.items():
        print(f"{name}: {path}")


def cmd_train(args):
    aug = AugmentationConfig.preset(args.preset, args.steps)
    cfg = ModelConfig(d_in=aug.d_in, d=args.d, num_blocks=args.blocks, seed=args.seed)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, use_res=args.loss == "cos+res",
                       seed=args.seed)
    tr = _load_split(args.data, "train")
    if not tr:
        raise UsageError(f"{args.data}: no training samples")
    params, history = train(tr, _load_split(args.data, "val"), tcfg, cfg, aug, log_path=args.log)
    save_checkpoint(args.out, params, cfg, aug)
    last = history.rows[-1]
    print(f"saved {args.out}; last {last['split']} delta={last['delta']:.4f} total loss={last['total']:.4f}")


def cmd_eval(args):
    report = evaluate_checkpoint(args.checkpoint, args.manifest, trace=args.trace)
    print(f"samples={report.eps.size} mean_eps={report.mean_eps:.6e} mean_delta={report.mean_delta:.6f}")
    if args.trace:
        for i, tr in enumerate(report.traces):
            print(i, " ".join(f"{k}={v}" for k, v in tr.items()))
    if args.csv:
        write_csv(args.csv, report.rows(), ("sample", "eps", "delta", "time"))


def _read_system(args):
    A = read_matrix(args.matrix)
    if args.rhs is not None:
        b = read_vector(args.rhs)
        if b.size != A.n:
            raise UsageError(f"{args.rhs}: length {b.size} does not match n={A.n}")
        return A, b
    return A, ds.sample_from_matrix(A, args.seed).b


def cmd_solve(args):
    solver = NeuralSolver.load(args.checkpoint)
    A, b = _read_system(args)
    res = solver.solve(A, b)
    if res.degenerate:
        log.warning("degenerate scale estimate; returning zero")
    np.savetxt(sys.stdout, res.solution, fmt="%.17g")
    print(f"# relative residual {relative_residual(A, res.solution, b):.6e}")
    if args.output:
        write_vector(args.output, res.solution)


def cmd_bench(args):
    solver = NeuralSolver.load(args.checkpoint)
    samples = ds.load_manifest_samples(args.manifest)[: args.limit]
    rows = timing_bench(solver, samples, args.delta)
    print(f"# {TIMING_NOTE}")
    print(f"median nsls_time={np.median([r['nsls_time'] for r in rows]):.3e}s "
          f"median cg_time={np.median([r['cg_time'] for r in rows]):.3e}s")
    if args.csv:
        write_csv(args.csv, rows, comment=TIMING_NOTE)


def cmd_hybrid_bench(args):
    solver = NeuralSolver.load(args.checkpoint)
    rows = hybrid_bench(solver, ds.load_manifest_samples(args.manifest), args.targets)
    for r in rows:
        print(f"delta={r['delta']:g} zero={r['zero_init_mean']:.1f} nsls={r['nsls_init_mean']:.1f} "
              f"reduction={r['reduction_pct']:+.1f}% unconverged={r['unconverged']}")
    if args.csv:
        write_csv(args.csv, rows)


def cmd_ablate(args):
    rows = TABLE2_ROWS
    if args.rows:
        try:
            rows = [tuple(r.split(":", 1)) for r in args.rows]
            for loss, preset in rows:
                AugmentationConfig.preset(preset)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    template = ModelConfig(d_in=1, d=args.d, num_blocks=args.blocks, seed=args.seed)
    table = ablation_run(rows, _load_split(args.data, "train"), _load_split(args.data, "val"),
                         _load_split(args.data, "test"), template, tcfg, args.steps)
    for r in table:
        print(f"{r['loss']:8s} {r['augmentation']:11s} eps={r['eps']:.4e} delta={100 * r['delta']:.2f}%")
    if args.csv:
        write_csv(args.csv, table, ("loss", "augmentation", "eps", "delta"))


def cmd_grad_check(args):
    ok = True
    for seed in range(args.seed, args.seed + args.seeds):
        report = grad_check(seed=seed, threshold=args.threshold)
        print(f"seed {seed}: max relative error {report.max_error:.3e} {'PASS' if report.passed else 'FAIL'}")
        if not report.passed:
            print(report.format())
            ok = False
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_inspect(args):
    A = read_matrix(args.matrix)
    diam, exact = graph_diameter_info(A)
    cond = condition_estimate(A)
    print(f"n={A.n} nnz={A.nnz}")
    print(f"diameter={diam}{'' if exact else ' (sampled lower bound)'}")
    print(f"condition~{cond.kappa:.6e} (|lambda| in [{cond.lam_min:.3e}, {cond.lam_max:.3e}]"
          f"{'' if cond.converged else ', not converged'})")
    if A.n <= args.dump_limit:
        b = read_vector(args.rhs) if args.rhs else np.zeros(A.n)
        print(from_system(A, b).dump())


COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "hybrid-bench": cmd_hybrid_bench,
    "ablate": cmd_ablate,
    "grad-check": cmd_grad_check,
    "inspect": cmd_inspect,
}


def main(argv=None):
    try:
        args = _parse(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"graphsolver: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"graphsolver: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args) or EXIT_OK
    except UsageError as exc:
        print(f"graphsolver: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MatrixMarketError, ds.DatasetError, CheckpointError, ConfigMismatchError) as exc:
        print(f"graphsolver: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DegenerateLossError, NotPositiveDefiniteError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"graphsolver: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
