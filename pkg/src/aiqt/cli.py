"""Command-line harness: training and evaluation runs, report tables,
power-law fits, rank profiles, per-sample reconstructions, and OpenQASM
export.

Experiments are described by a strict JSON config (unknown keys are
rejected so typos fail fast).  All file writes are atomic
(write-temp-then-rename).  The log level comes from the ``AIQT_LOG``
environment variable (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .data import (
    SampleSet,
    load_cifar,
    load_csv_series,
    load_mnist,
    load_sampleset,
    synthetic_corpus,
    window_timeseries,
)
from .encoding import (
    RULE_CONJSYM,
    RULE_TOPK,
    evaluate_dataset,
    batch_pipeline,
    rank_profile,
)
from .errors import AiqtError, InvalidArgumentError
from .model import (
    _atomic_write_text,
    deep_init,
    fsl_model,
    load_checkpoint,
    save_checkpoint,
)
from .powerlaw import fit_power_law
from .qasm import export_qasm
from .training import LossConfig, TrainConfig, train

log = logging.getLogger("aiqt.cli")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------

_DATASET_KEYS = {
    "source", "kind", "path", "column", "stride", "count", "resize",
    "mode", "limit", "max_pairs",
}
_LOSS_KEYS = {"tau", "lam"}
_OPT_KEYS = {"epochs", "batch_size", "lr_max", "lr_min", "beta1", "beta2", "eps"}
_RULE_KEYS = {"aiqt", "fsl"}
_TOP_KEYS = {
    "dataset", "n", "k", "depth", "seed", "out_dir", "loss", "optimizer", "rules",
}


def _check_keys(d: dict, allowed: set, context: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise InvalidArgumentError(
            f"config {context}: unknown keys {sorted(unknown)} (allowed: {sorted(allowed)})"
        )


@dataclass
class ExperimentConfig:
    """Validated experiment description (see :func:`load_config`)."""

    dataset: dict
    n: int
    k_list: list[int]
    depth: int = 1
    seed: int = 0
    out_dir: str = "."
    loss: LossConfig = None
    optimizer: TrainConfig = None
    rules: dict = field(default_factory=lambda: {"aiqt": RULE_TOPK, "fsl": RULE_CONJSYM})

    @property
    def k(self) -> int:
        return self.k_list[0]


def load_config(path: str, overrides: argparse.Namespace | None = None) -> ExperimentConfig:
    """Parse and validate a JSON experiment config, rejecting unknown keys."""
    if not os.path.exists(path):
        raise InvalidArgumentError(f"config file not found: {path}")
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise InvalidArgumentError("config: top level must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "top level")
    for key in ("dataset", "n", "k"):
        if key not in doc:
            raise InvalidArgumentError(f"config: missing required key {key!r}")
    dataset = doc["dataset"]
    if not isinstance(dataset, dict) or "source" not in dataset:
        raise InvalidArgumentError("config dataset: must be an object with a 'source'")
    _check_keys(dataset, _DATASET_KEYS, "dataset")
    if dataset["source"] in ("csv", "mnist", "cifar", "cache"):
        p = dataset.get("path")
        if not p or not os.path.exists(p):
            raise InvalidArgumentError(f"config dataset: path {p!r} does not exist")

    n = int(doc["n"])
    if not 1 <= n <= 20:
        raise InvalidArgumentError(f"config: n={n} out of range 1..20")
    N = 1 << n
    k_raw = doc["k"]
    k_list = [int(v) for v in (k_raw if isinstance(k_raw, list) else [k_raw])]
    for kv in k_list:
        if not 1 <= kv <= N:
            raise InvalidArgumentError(f"config: k={kv} invalid for N={N}")

    loss_doc = doc.get("loss", {})
    _check_keys(loss_doc, _LOSS_KEYS, "loss")
    opt_doc = doc.get("optimizer", {})
    _check_keys(opt_doc, _OPT_KEYS, "optimizer")
    rules = dict({"aiqt": RULE_TOPK, "fsl": RULE_CONJSYM}, **doc.get("rules", {}))
    _check_keys(rules, _RULE_KEYS, "rules")
    for rule in rules.values():
        if rule not in (RULE_TOPK, RULE_CONJSYM):
            raise InvalidArgumentError(f"config rules: unknown selection rule {rule!r}")

    cfg = ExperimentConfig(
        dataset=dataset,
        n=n,
        k_list=k_list,
        depth=int(doc.get("depth", 1)),
        seed=int(doc.get("seed", 0)),
        out_dir=str(doc.get("out_dir", ".")),
        loss=LossConfig(k=k_list[0], **loss_doc),
        optimizer=TrainConfig(seed=int(doc.get("seed", 0)), **opt_doc),
        rules=rules,
    )
    if overrides is not None:
        _apply_overrides(cfg, overrides)
    if cfg.depth < 1:
        raise InvalidArgumentError("config: depth must be >= 1")
    return cfg


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.optimizer.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "depth", None) is not None:
        cfg.depth = args.depth
    if getattr(args, "k", None) is not None:
        N = 1 << cfg.n
        ks = [int(v) for v in args.k.split(",")]
        for kv in ks:
            if not 1 <= kv <= N:
                raise InvalidArgumentError(f"--k {kv} invalid for N={N}")
        cfg.k_list = ks
        cfg.loss.k = ks[0]


def load_dataset(cfg: ExperimentConfig) -> SampleSet:
    d = cfg.dataset
    source = d["source"]
    N = 1 << cfg.n
    if source == "synthetic":
        return synthetic_corpus(
            d.get("kind", "piecewise"), cfg.n, int(d.get("count", 1000)),
            seed=cfg.seed, max_pairs=int(d.get("max_pairs", 8)),
        )
    if source == "csv":
        series = load_csv_series(d["path"], d.get("column", "close"))
        return window_timeseries(list(series.values()), N, int(d.get("stride", 1)))
    if source == "mnist":
        ss = load_mnist(d["path"], d.get("resize", "zero-pad"), seed=cfg.seed,
                        limit=d.get("limit"))
    elif source == "cifar":
        ss = load_cifar(d["path"], d.get("mode", "bw"), seed=cfg.seed,
                        limit=d.get("limit"))
    elif source == "cache":
        ss = load_sampleset(d["path"])
    else:
        raise InvalidArgumentError(f"config dataset: unknown source {source!r}")
    if ss.N != N:
        raise InvalidArgumentError(
            f"dataset sample length {ss.N} does not match n={cfg.n} (N={N})"
        )
    return ss


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _write_json(path: str, doc) -> None:
    _atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: str, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _crmse_display(value: float) -> str:
    """cRMSE in units of 1e-3 with 4 significant digits (table display)."""
    return format(value * 1e3, ".4g")


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def _resolve_model(args, cfg: ExperimentConfig | None):
    """Model for --method aiqt (checkpoint) or fsl (no checkpoint)."""
    if args.method == "fsl":
        if cfg is None:
            raise InvalidArgumentError("--config is required to size the FSL model")
        return fsl_model(cfg.n)
    if not args.checkpoint:
        raise InvalidArgumentError("--checkpoint is required with --method aiqt")
    model, _ = load_checkpoint(args.checkpoint)
    return model


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_config(args.config, args)
    ss = load_dataset(cfg)          # k already validated against N by the config
    os.makedirs(cfg.out_dir, exist_ok=True)
    model0 = deep_init(cfg.n, cfg.depth, seed=cfg.seed)
    log.info("training: n=%d depth=%d k=%d epochs=%d train_samples=%d",
             cfg.n, cfg.depth, cfg.loss.k, cfg.optimizer.epochs, ss.train.shape[0])
    model, history = train(ss.train, model0, cfg.loss, cfg.optimizer)
    ckpt = os.path.join(cfg.out_dir, "checkpoint.json")
    save_checkpoint(model, ckpt, {
        "seed": cfg.seed, "k": cfg.loss.k, "epochs": cfg.optimizer.epochs,
        "dataset": cfg.dataset,
    })
    hist_path = os.path.join(cfg.out_dir, "history.csv")
    cols = ["epoch", "lr", "hard_tail_loss", "soft_loss", "entropy_term",
            "mean_imag_norm", "mean_real_norm", "wall_time_s"]
    _write_csv(hist_path, cols, [[row[c] for c in cols] for row in history])
    print(f"checkpoint: {ckpt}")
    print(f"history: {hist_path}")
    print(f"final hard tail loss: {history[-1]['hard_tail_loss']:.6e}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args)
    ss = load_dataset(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    methods = []
    if args.method in ("aiqt", "both"):
        if not args.checkpoint:
            raise InvalidArgumentError("--checkpoint is required to evaluate aiqt")
        model, _ = load_checkpoint(args.checkpoint)
        if model.n != cfg.n:
            raise InvalidArgumentError(
                f"checkpoint n={model.n} does not match config n={cfg.n}"
            )
        methods.append(("aiqt", model, cfg.rules["aiqt"], ("train", "validation")))
    if args.method in ("fsl", "both"):
        # The Fourier baseline needs no training, so by default it is
        # reported on the validation split only.
        splits = ("train", "validation") if args.fsl_train_split else ("validation",)
        methods.append(("fsl", fsl_model(cfg.n), cfg.rules["fsl"], splits))
    rows = []
    for name, model, rule, splits in methods:
        for kv in cfg.k_list:
            for split in splits:
                X = ss.split(split)
                if X.shape[0] == 0:
                    continue
                r = evaluate_dataset(X, model, rule, kv, workers=args.workers)
                r.update({"method": name, "split": split})
                rows.append(r)
    out_json = os.path.join(cfg.out_dir, "eval.json")
    _write_json(out_json, rows)
    header = ["method", "rule", "k", "|K|", "split",
              "cRMSE(x1e-3)", "F", "Ibar", "Rbar"]
    table_rows = [[r["method"], r["rule"], str(r["k"]), str(r["kept_size"]),
                   r["split"], _crmse_display(r["mean_crmse"]),
                   f"{r['mean_fidelity']:.6f}", f"{r['mean_imag_norm']:.3e}",
                   f"{r['mean_real_norm']:.6f}"] for r in rows]
    table = _format_table(header, table_rows)
    _atomic_write_text(os.path.join(cfg.out_dir, "eval.txt"), table)
    print(table, end="")
    print(f"report: {out_json}")
    return 0


def cmd_powerlaw(args) -> int:
    with open(args.eval_json) as f:
        rows = json.load(f)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.eval_json))
    fits = {}
    points_rows = []
    for method in sorted({r["method"] for r in rows}):
        sel = [r for r in rows if r["method"] == method
               and r["split"] == "validation"]
        sel.sort(key=lambda r: r["k"])
        ks = [r["k"] for r in sel]
        errs = [r["mean_crmse"] for r in sel]
        fit = fit_power_law(ks, errs)
        fits[method] = {"A": fit.A, "B": fit.B, "r_squared": fit.r_squared}
        for kv, ev in zip(ks, errs):
            points_rows.append([method, kv, ev, fit.A * kv ** fit.B])
        print(f"{method}: cRMSE ~ {fit.A:.4e} * k^{fit.B:.4f}  (R^2 = {fit.r_squared:.4f})")
    out_json = os.path.join(out_dir, "powerlaw.json")
    _write_json(out_json, fits)
    _write_csv(os.path.join(out_dir, "powerlaw_points.csv"),
               ["method", "k", "crmse", "fit_crmse"], points_rows)
    print(f"fits: {out_json}")
    return 0


def cmd_export_qasm(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    out = args.out or (os.path.splitext(args.checkpoint)[0] + ".qasm")
    err = export_qasm(model, out)
    print(f"qasm: {out} (round-trip deviation {err:.3e})")
    return 0


def _write_pgm(path: str, img: np.ndarray) -> None:
    """8-bit binary PGM of an image already clipped to [0, 1]."""
    data = (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    h, w = data.shape
    header = f"P5\n{w} {h}\n255\n".encode()
    d = os.path.dirname(os.path.abspath(path))
    import tempfile
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".pgm")
    with os.fdopen(fd, "wb") as f:
        f.write(header + data.tobytes())
    os.replace(tmp, path)


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config, args)
    ss = load_dataset(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    if not 0 <= args.sample < ss.samples.shape[0]:
        raise InvalidArgumentError(
            f"sample index {args.sample} out of range 0..{ss.samples.shape[0] - 1}"
        )
    x = ss.samples[args.sample]
    k = cfg.k
    scale = float(np.linalg.norm(x))
    X = x[None, :]
    fsl = fsl_model(cfg.n)
    fsl_rec = batch_pipeline(X, fsl, cfg.rules["fsl"], k)["psi_tilde"][0] * scale
    out_rows = {"original": x, "fsl_real": fsl_rec.real, "fsl_imag": fsl_rec.imag}
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        aiqt_rec = batch_pipeline(X, model, cfg.rules["aiqt"], k)["psi_tilde"][0] * scale
        out_rows["aiqt_real"] = aiqt_rec.real
        out_rows["aiqt_imag"] = aiqt_rec.imag
    header = ["index"] + list(out_rows)
    rows = [[j] + [out_rows[c][j] for c in out_rows] for j in range(x.size)]
    csv_path = os.path.join(cfg.out_dir, f"reconstruct_sample{args.sample}.csv")
    _write_csv(csv_path, header, rows)
    print(f"reconstruction: {csv_path}")
    if cfg.dataset["source"] in ("mnist", "cifar"):
        side = int(round(np.sqrt(x.size)))
        if side * side == x.size:
            for tag in ("original", "fsl_real") + (("aiqt_real",) if args.checkpoint else ()):
                p = os.path.join(cfg.out_dir, f"sample{args.sample}_{tag}.pgm")
                _write_pgm(p, out_rows[tag].reshape(side, side))
                print(f"image: {p}")
    return 0


def cmd_rank_profile(args) -> int:
    cfg = load_config(args.config, args)
    ss = load_dataset(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    model = _resolve_model(args, cfg)
    mean, std = rank_profile(ss.validation if ss.validation.shape[0] else ss.samples,
                             model)
    path = os.path.join(cfg.out_dir, f"rank_profile_{args.method}.csv")
    _write_csv(path, ["rank", "mean_energy", "std_energy"],
               [[i, mean[i], std[i]] for i in range(mean.size)])
    print(f"rank profile: {path}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aiqt",
        description="Trainable butterfly transforms for sparse amplitude encoding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, method=False):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--k", default=None, help="k or comma-separated k sweep")
        p.add_argument("--depth", type=int, default=None)
        if checkpoint:
            p.add_argument("--checkpoint", default=None)
        if method:
            p.add_argument("--method", choices=("aiqt", "fsl", "both"), default="both")

    p = sub.add_parser("train", help="train a model, write checkpoint + history")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metric report table over a k sweep")
    common(p, checkpoint=True, method=True)
    p.add_argument("--fsl-train-split", action="store_true",
                   help="also report the untrained baseline on the training split")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("powerlaw", help="power-law fit of an eval report")
    p.add_argument("eval_json", help="eval.json produced by the eval command")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_powerlaw)

    p = sub.add_parser("export-qasm", help="OpenQASM 2.0 export of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_qasm)

    p = sub.add_parser("reconstruct", help="per-sample reconstruction artifacts")
    common(p, checkpoint=True)
    p.add_argument("--sample", type=int, default=0)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("rank-profile", help="mean sorted energy profile")
    common(p, checkpoint=True, method=True)
    p.set_defaults(func=cmd_rank_profile)
    return parser


def main(argv=None) -> int:
    level = _LOG_LEVELS.get(os.environ.get("AIQT_LOG", "warn").lower())
    if level is None:
        print(f"unknown AIQT_LOG level {os.environ.get('AIQT_LOG')!r}", file=sys.stderr)
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "method", None) == "both" and args.command == "rank-profile":
        args.method = "fsl" if not args.checkpoint else "aiqt"
    try:
        return args.func(args)
    except AiqtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
