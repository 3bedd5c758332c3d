"""Command-line harness.

Subcommands:

  gradcheck  run the finite-difference suites and report the worst error
  train      one training run from a config file
  ablate     run a named preset family and check declared expectations
  sweep      vary one axis (expander_width or batch_size) over values
  probe      score a saved encoder checkpoint with linear and knn probes
  report     summarize a metrics CSV, optionally plotting curves

Every run directory receives a manifest.json recording the exact config
text, seeds, and sha256 hashes of all artifacts written, which is enough
to reproduce the run bit for bit (wall-clock timing columns aside).
Exit status is 0 only when everything the command promised to verify
actually held.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from . import network as net
from .config import (
    ConfigError,
    ExperimentConfig,
    build_dataset,
    default_experiment_config,
    read_config,
    serialize_config,
)
from .evaluation import probe_frozen_encoder
from .gradcheck import run_loss_gradcheck_suite, run_pipeline_gradcheck_suite
from .training import (
    COLLAPSE_PATIENCE,
    detect_collapse,
    read_metrics_csv,
    train,
    write_metrics_csv,
    write_metrics_jsonl,
)

__all__ = ["main", "ExperimentPreset", "PRESET_FAMILIES", "run_preset"]


@dataclass(frozen=True)
class ExperimentPreset:
    """A named, fully pinned run with an optional declared outcome.

    expected_verdict is one of None (nothing promised), "collapsed" or
    "stable"; ablate exits nonzero if a declared expectation fails.
    """

    name: str
    config: ExperimentConfig
    expected_verdict: str | None = None


def _coefficient_preset(name, lambda_, mu, nu, base_lr, expected):
    base = default_experiment_config()
    coeffs = replace(base.train.coeffs, lambda_=lambda_, mu=mu, nu=nu)
    cfg = ExperimentConfig(
        base.data, replace(base.train, coeffs=coeffs, base_lr=base_lr)
    )
    return ExperimentPreset(name, cfg, expected)


def _mechanism_preset(name, coeff_overrides=None, **mech_overrides):
    # Short exploratory runs. The predictor adds a third network and a
    # second gradient path into each embedding, which lowers the
    # divergence threshold well below the plain-loss rate, hence the
    # cooler 0.001.
    base = default_experiment_config()
    mech = replace(base.train.mechanism, **mech_overrides)
    coeffs = base.train.coeffs
    if coeff_overrides:
        coeffs = replace(coeffs, **coeff_overrides)
    cfg = ExperimentConfig(
        base.data,
        replace(base.train, mechanism=mech, coeffs=coeffs, epochs=30,
                base_lr=0.001),
    )
    return ExperimentPreset(name, cfg, None)


# The coefficient family turns terms of the objective off one at a time.
# Invariance alone, or invariance with only decorrelation, lets both
# branches sink into a constant embedding; keeping the variance hinge in
# play prevents that with or without the covariance penalty. Each preset
# carries the hottest learning rate its gradient scale tolerates: the
# coefficient-25 runs need a 10x cooler rate than the coefficient-1 runs
# (0.02 and above diverges for them at the default widths).
PRESET_FAMILIES = {
    "coefficients": (
        _coefficient_preset("inv_only", 1.0, 0.0, 0.0, 0.05, "collapsed"),
        _coefficient_preset("inv_cov", 25.0, 0.0, 1.0, 0.005, "collapsed"),
        _coefficient_preset("inv_var", 1.0, 1.0, 0.0, 0.05, "stable"),
        _coefficient_preset("full", 25.0, 25.0, 1.0, 0.005, "stable"),
    ),
    # The asymmetric presets keep the full invariance weight but regularize
    # weakly (mu=1, nu=0.01), the convention for bolting variance and
    # covariance penalties onto stop-gradient/moving-average methods.
    "mechanisms": (
        _mechanism_preset("predictor", use_predictor=True),
        _mechanism_preset("stop_gradient",
                          coeff_overrides={"mu": 1.0, "nu": 0.01},
                          use_predictor=True, use_stop_gradient=True),
        _mechanism_preset("ema_target",
                          coeff_overrides={"mu": 1.0, "nu": 0.01},
                          use_predictor=True, use_ema=True),
        _mechanism_preset("no_reg_predictor", use_predictor=True,
                          use_variance_reg=False, use_covariance_reg=False),
    ),
}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg: ExperimentConfig | None,
                    artifacts, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "created_unix": int(time.time()),
        "artifacts": {name: f"sha256:{_sha256(path)}"
                      for name, path in artifacts.items()},
    }
    if cfg is not None:
        manifest["config"] = serialize_config(cfg)
        manifest["seeds"] = {
            "data": cfg.data.seed,
            "views": cfg.train.views.seed,
            "train": cfg.train.seed,
        }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def save_checkpoint(model, path: Path) -> None:
    """One file per network, referenced from a tiny JSON index."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = {"format_version": net.CHECKPOINT_VERSION, "networks": {}}
    pieces = [("encoder", model.encoder, model.encoder_spec),
              ("expander", model.expander, model.expander_spec)]
    if model.predictor is not None:
        pieces.append(("predictor", model.predictor, model.predictor_spec))
    if model.encoder_b is not None:
        pieces.append(("encoder_b", model.encoder_b, model.encoder_b_spec))
        pieces.append(("expander_b", model.expander_b, model.expander_b_spec))
    for name, params, spec in pieces:
        net.save_params(params, spec, path / f"{name}.npz")
        index["networks"][name] = f"{name}.npz"
    index["branch_b_role"] = model.branch_b_role
    with open(path / "index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint_encoder(path: Path):
    path = Path(path)
    with open(path / "index.json", "r", encoding="utf-8") as fh:
        index = json.load(fh)
    return net.load_params(path / index["networks"]["encoder"])


def run_preset(preset: ExperimentPreset, out_dir: Path):
    """Train one preset, write its artifacts, and return (verdict, rows)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(preset.config)
    model, rows = train(dataset, preset.config.train)
    csv_path = out_dir / "metrics.csv"
    jsonl_path = out_dir / "metrics.jsonl"
    write_metrics_csv(rows, csv_path)
    write_metrics_jsonl(rows, jsonl_path)
    ckpt_dir = out_dir / "checkpoint"
    save_checkpoint(model, ckpt_dir)
    # runs shorter than the detector's patience window have no verdict
    if len(rows) >= COLLAPSE_PATIENCE:
        verdict = detect_collapse(rows, preset.config.train.coeffs.gamma)
    else:
        verdict = "undefined"
    artifacts = {"metrics.csv": csv_path, "metrics.jsonl": jsonl_path}
    for f in sorted(ckpt_dir.iterdir()):
        artifacts[f"checkpoint/{f.name}"] = f
    _write_manifest(out_dir, "train", preset.config, artifacts,
                    {"preset": preset.name, "verdict": verdict})
    return verdict, rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_gradcheck(args) -> int:
    loss_report = run_loss_gradcheck_suite(tolerance=args.tolerance)
    pipe_report = run_pipeline_gradcheck_suite(tolerance=args.tolerance)
    print(f"loss gradients:     {loss_report.n_configs} configs, "
          f"max relative error {loss_report.max_error:.3e}")
    print(f"pipeline gradients: {pipe_report.n_configs} configs, "
          f"max relative error {pipe_report.max_error:.3e}")
    ok = loss_report.passed and pipe_report.passed
    print(f"tolerance {args.tolerance:.1e}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _load_config(args) -> ExperimentConfig:
    return read_config(args.config, os.environ)


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out_dir)
    preset = ExperimentPreset("train", cfg, None)
    verdict, rows = run_preset(preset, out_dir)
    last = rows[-1]
    print(f"{cfg.train.epochs} epochs, final total {last.total:.6f}, "
          f"embed std {last.mean_embed_std:.4f}, verdict {verdict}")
    print(f"artifacts in {out_dir}")
    return 0


def _cmd_ablate(args) -> int:
    if args.list:
        for family, presets in PRESET_FAMILIES.items():
            names = ", ".join(p.name for p in presets)
            print(f"{family}: {names}")
        return 0
    if args.family not in PRESET_FAMILIES:
        print(f"unknown preset family {args.family!r}; "
              f"available: {', '.join(PRESET_FAMILIES)}", file=sys.stderr)
        return 2
    out_root = Path(args.out_dir)
    failures = []
    for preset in PRESET_FAMILIES[args.family]:
        verdict, rows = run_preset(preset, out_root / preset.name)
        expectation = preset.expected_verdict or "none"
        status = "ok"
        if preset.expected_verdict and verdict != preset.expected_verdict:
            status = "FAILED"
            failures.append(preset.name)
        print(f"{preset.name}: verdict={verdict} expected={expectation} "
              f"final_embed_std={rows[-1].mean_embed_std:.4f} [{status}]")
    if failures:
        print(f"failed expectations: {', '.join(failures)}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args) if args.config else default_experiment_config()
    if args.epochs is not None:
        # shortening a run must also shorten its warmup to stay valid
        warmup = min(cfg.train.warmup_epochs, args.epochs)
        cfg = ExperimentConfig(
            cfg.data,
            replace(cfg.train, epochs=args.epochs, warmup_epochs=warmup),
        )
    values = [int(v) for v in args.values.split(",") if v.strip()]
    if not values:
        print("no sweep values given", file=sys.stderr)
        return 2
    out_root = Path(args.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    lines = ["point,final_total,final_embed_std,final_corr,linear_acc"]
    for value in values:
        if args.axis == "expander_width":
            rep = cfg.train.shapes.encoder_widths[-1]
            shapes = replace(cfg.train.shapes,
                             expander_widths=(rep, value, value, value))
            point_cfg = ExperimentConfig(
                cfg.data, replace(cfg.train, shapes=shapes))
        else:  # batch_size
            point_cfg = ExperimentConfig(
                cfg.data, replace(cfg.train, batch_size=value))
        preset = ExperimentPreset(f"{args.axis}_{value}", point_cfg, None)
        point_dir = out_root / preset.name
        verdict, rows = run_preset(preset, point_dir)
        dataset = build_dataset(point_cfg)
        enc_params, enc_spec = load_checkpoint_encoder(point_dir / "checkpoint")
        probes = probe_frozen_encoder(enc_params, enc_spec, dataset,
                                      point_cfg.train.views,
                                      seed=point_cfg.train.seed)
        last = rows[-1]
        lines.append(
            f"{value},{last.total!r},{last.mean_embed_std!r},"
            f"{last.avg_corr_repr!r},{probes['linear'].accuracy!r}"
        )
        print(f"{args.axis}={value}: total={last.total:.4f} "
              f"embed_std={last.mean_embed_std:.4f} verdict={verdict} "
              f"linear={probes['linear'].accuracy:.4f}")
    summary = out_root / "sweep.csv"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(out_root, "sweep", None, {"sweep.csv": summary},
                    {"axis": args.axis, "values": values})
    print(f"summary in {summary}")
    return 0


def _cmd_probe(args) -> int:
    cfg = _load_config(args)
    enc_params, enc_spec = load_checkpoint_encoder(Path(args.checkpoint))
    dataset = build_dataset(cfg)
    results = probe_frozen_encoder(enc_params, enc_spec, dataset,
                                   cfg.train.views, seed=cfg.train.seed,
                                   knn_k=args.k)
    linear = results["linear"]
    knn = results["knn"]
    print(f"linear probe accuracy: {linear.accuracy:.4f} "
          f"({linear.n_eval} eval samples)")
    print(f"knn (k={knn.k}) accuracy: {knn.accuracy:.4f}")
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        record = {
            "checkpoint": str(args.checkpoint),
            "linear_accuracy": linear.accuracy,
            "knn_accuracy": knn.accuracy,
            "knn_k": knn.k,
            "n_eval": linear.n_eval,
        }
        with open(out_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        print(f"appended to {out_path}")
    return 0


def _cmd_report(args) -> int:
    rows = read_metrics_csv(args.metrics)
    if not rows:
        print("metrics file has no rows", file=sys.stderr)
        return 1
    first, last = rows[0], rows[-1]
    stds = [r.mean_embed_std for r in rows]
    print(f"epochs: {len(rows)} ({first.epoch}..{last.epoch})")
    print(f"total loss: first {first.total:.6f}, last {last.total:.6f}")
    print(f"mean embedding std: min {min(stds):.6f}, max {max(stds):.6f}, "
          f"last {last.mean_embed_std:.6f}")
    print(f"mean representation std: last {last.mean_repr_std:.6f}")
    print(f"avg correlation (representations): last {last.avg_corr_repr:.6f}")
    if len(rows) >= 5:
        verdict = detect_collapse(rows, args.gamma)
        print(f"collapse verdict (gamma={args.gamma}): {verdict}")
    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        epochs = [r.epoch for r in rows]
        fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        axes[0].plot(epochs, stds, label="mean embed std")
        axes[0].plot(epochs, [r.mean_repr_std for r in rows],
                     label="mean repr std")
        axes[0].set_ylabel("per-dim std")
        axes[0].legend()
        axes[1].plot(epochs, [r.avg_corr_repr for r in rows],
                     label="avg corr (repr)", color="tab:red")
        axes[1].set_ylabel("avg squared corr")
        axes[1].set_xlabel("epoch")
        axes[1].legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"plot written to {args.plot}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vicreg",
        description="variance-invariance-covariance training harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--tolerance", type=float, default=1.0e-6)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("train", help="single training run from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="runs/train")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("ablate", help="run a preset family with expectations")
    p.add_argument("family", nargs="?", default="coefficients")
    p.add_argument("--out-dir", default="runs/ablate")
    p.add_argument("--list", action="store_true",
                   help="list preset families and exit")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("sweep", help="train across one varied axis")
    p.add_argument("axis", choices=("expander_width", "batch_size"))
    p.add_argument("--values", required=True,
                   help="comma-separated integers")
    p.add_argument("--config", default=None)
    p.add_argument("--epochs", type=int, default=None,
                   help="override epochs for every sweep point")
    p.add_argument("--out-dir", default="runs/sweep")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("probe", help="score a saved encoder checkpoint")
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint directory written by train/ablate")
    p.add_argument("--config", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--out", default=None,
                   help="append a JSON record to this report file")
    p.set_defaults(fn=_cmd_probe)

    p = sub.add_parser("report", help="summarize a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--plot", default=None, help="write curves to this PNG")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
