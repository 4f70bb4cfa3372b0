"""Command-line orchestration: preprocess, train, simulate, benchmark.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import mdn, simlab, trajdata

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("vnfmig")


class DataError(RuntimeError):
    pass


def _common(p):
    p.add_argument("--config", metavar="PATH", help="configuration file (INI, dotted sections)")
    p.add_argument("--seed", type=int, help="master seed (overrides seeds.master)")
    p.add_argument("--out", metavar="PATH", help="primary output file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key; repeatable")
    p.add_argument("--desk-scale", action="store_true",
                   help="preset: 200 users, 1000 evaluation steps, 20000 training windows")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    ap = argparse.ArgumentParser(prog="vnfmig", description=__doc__, epilog=cfgmod.help_text(),
                                 formatter_class=fmt)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="Geolife .plt tree -> processed dataset + manifest",
                       epilog=cfgmod.help_text(), formatter_class=fmt)
    _common(p)
    p.add_argument("input_dir", nargs="?", help="directory searched recursively for .plt files")
    p.add_argument("--manifest", metavar="PATH", help="manifest path (default: OUT.manifest.json)")
    p.add_argument("--synthetic", type=int, metavar="N",
                   help="write N synthetic pedestrian .plt files into INPUT_DIR first")

    p = sub.add_parser("train", help="train the MDN on a processed dataset",
                       epilog=cfgmod.help_text(), formatter_class=fmt)
    _common(p)
    p.add_argument("dataset", help="processed dataset file")
    p.add_argument("--epochs", type=int, help="overrides mdn.epochs")
    p.add_argument("--losses", metavar="PATH", help="loss CSV (default: OUT.losses.csv)")
    p.add_argument("--kernels", metavar="PATH", help="fitted kernel bank (default: OUT.kernels.json)")

    p = sub.add_parser("simulate", help="run one simulation and write the interval ledger",
                       epilog=cfgmod.help_text(), formatter_class=fmt)
    _common(p)
    p.add_argument("--controller", choices=("optimal", "baseline"), default="optimal")
    p.add_argument("--checkpoint", metavar="PATH", help="trained MDN checkpoint")
    p.add_argument("--po", type=float, help="baseline P_o (overrides baseline.P_o)")
    p.add_argument("--pv", type=float, help="baseline P_v (overrides baseline.P_v)")

    p = sub.add_parser("benchmark", help="threshold grid vs the optimal controller",
                       epilog=cfgmod.help_text(), formatter_class=fmt)
    _common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="trained MDN checkpoint")
    return ap


def _values(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seeds.master={args.seed}")
    return cfgmod.load(args.config, args.desk_scale, overrides)


def _require_out(args, default):
    return Path(args.out or default)


def cmd_preprocess(args, v):
    if args.input_dir is None:
        raise cfgmod.ConfigurationError("preprocess needs INPUT_DIR")
    root = Path(args.input_dir)
    if args.synthetic:
        trajdata.write_synthetic_corpus(root, args.synthetic, seed=v["seeds.master"])
    if not root.is_dir():
        raise cfgmod.ConfigurationError(f"input directory {root} does not exist")
    if not trajdata.find_plt_files(root):
        raise DataError("no trajectories found")
    res = trajdata.preprocess_directory(root, cfgmod.pipeline_config(v))
    if res.manifest["records_parsed"] == 0:
        raise DataError("no trajectories found")
    out = _require_out(args, "dataset.csv")
    trajdata.write_dataset(res.segments, out)
    manifest_path = Path(args.manifest or f"{out}.manifest.json")
    trajdata.write_manifest(res.manifest, manifest_path)
    for k in sorted(res.manifest):
        print(f"{k}: {res.manifest[k]}")
    return EXIT_OK


def cmd_train(args, v):
    try:
        segments = trajdata.read_dataset(args.dataset)
    except OSError as e:
        raise DataError(f"cannot read dataset: {e}") from e
    except ValueError as e:
        raise DataError(str(e)) from e
    seed = v["seeds.master"]
    split = trajdata.split_segments(segments, v["pipeline.split_ratio"], seed)
    tr = trajdata.windows_from_segments(split.train)
    va = trajdata.windows_from_segments(split.validation)
    if len(tr[1]) == 0:
        raise DataError("dataset yields no training windows")
    epochs = v["mdn.epochs"] if args.epochs is None else args.epochs
    model = mdn.init_model(components=v["mdn.components"], seed=seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, hist = mdn.train(model, tr, va, epochs, v["mdn.batch_size"],
                                cfgmod.optimizer(v), seed=seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = _require_out(args, "mdn.ckpt")
    mdn.save_checkpoint(model, out)
    with open(args.losses or f"{out}.losses.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("epoch", "train_nll", "val_nll"))
        for e, a, b in hist.rows():
            w.writerow((e, repr(float(a)), repr(float(b))))
    kernels = fitted_kernels(model, va if len(va[1]) else tr, v["mdn.export_kernels"], seed)
    simlab.save_kernels(kernels, args.kernels or f"{out}.kernels.json")
    for e, a, b in hist.rows():
        print(f"epoch {e}: train_nll={a:.6f} val_nll={b:.6f}")
    return EXIT_OK


def fitted_kernels(model, dataset, n, seed):
    """Mixtures emitted by the trained model on ``n`` sampled windows."""
    windows = dataset[0]
    if n <= 0 or len(windows) == 0:
        return []
    idx = np.sort(np.random.default_rng(seed).choice(len(windows), min(n, len(windows)), replace=False))
    p = mdn.forward_batch(model, windows[idx])
    return [p[i] for i in range(len(idx))]


def _load_model(args, required):
    if not args.checkpoint:
        if required:
            raise cfgmod.ConfigurationError("the optimal controller needs --checkpoint")
        return None
    try:
        return mdn.load_checkpoint(args.checkpoint)
    except (OSError, mdn.CheckpointError) as e:
        raise cfgmod.ConfigurationError(f"cannot load checkpoint: {e}") from e


def cmd_simulate(args, v):
    model = _load_model(args, required=args.controller == "optimal")
    sc = cfgmod.sim_config(v)
    po = v["baseline.P_o"] if args.po is None else args.po
    pv = v["baseline.P_v"] if args.pv is None else args.pv
    result = simlab.run_simulation(sc, args.controller, v["seeds.master"], (po, pv), model)
    out = _require_out(args, "ledger.csv")
    simlab.write_ledger_csv(result, out)
    print(simlab.summary_line(result))
    return EXIT_OK


def cmd_benchmark(args, v):
    model = _load_model(args, required=True)
    sc = cfgmod.sim_config(v)
    seeds = range(v["seeds.master"], v["seeds.master"] + v["benchmark.seeds"])
    table = simlab.benchmark_grid(sc, v["benchmark.P_o_grid"], v["benchmark.P_v_grid"], seeds, model)
    out = _require_out(args, "benchmark.csv")
    simlab.write_benchmark_csv(table, out)
    best = table.best_baseline
    print(f"optimal mean_total={table.optimal.mean_total!r} "
          f"best baseline {best.label} mean_total={best.mean_total!r}")
    return EXIT_OK


COMMANDS = {"preprocess": cmd_preprocess, "train": cmd_train,
            "simulate": cmd_simulate, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        v = _values(args)
        return COMMANDS[args.command](args, v)
    except cfgmod.ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
