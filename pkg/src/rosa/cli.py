"""Command-line front end.

Subcommands: train, theorem, spectrum, ablate, schemes. Configuration for
training comes from an optional JSON file (keys mirror TrainConfig, with an
optional "data" object mirroring SyntheticSpec) plus flag overrides; flags
win. Exit codes: 0 success, 2 bad configuration, 3 numeric failure,
4 I/O or file-format failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (CheckpointFormatError, ConfigError, InvalidInputError,
                     NumericError, RosaError)
from .experiments import (run_ablation_grid, run_scheme_grid,
                          run_theorem_suite, spectrum_report,
                          write_spectrum_csv)
from .synthetic import SyntheticSpec, generate_synthetic
from .training import (TrainConfig, run_training, write_metrics_csv,
                       write_summary_json)


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return raw


def _build_configs(args) -> tuple[TrainConfig, SyntheticSpec]:
    file_cfg = _load_config_file(args.config) if args.config else {}
    data_cfg = file_cfg.pop("data", {})
    if not isinstance(data_cfg, dict):
        raise ConfigError("data", "must be a JSON object")
    unknown = set(file_cfg) - _field_names(TrainConfig)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config field")
    unknown = set(data_cfg) - _field_names(SyntheticSpec)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown data config field")
    overrides = {
        "method": args.method,
        "rank": args.rank,
        "factorize_every": args.factorize_every,
        "factorize_unit": args.factorize_unit,
        "scheme": args.scheme,
        "ablation": args.ablation,
        "lr": args.lr,
        "epochs": args.epochs,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            file_cfg[key] = value
    if "layer_dims" in data_cfg:
        data_cfg["layer_dims"] = tuple(data_cfg["layer_dims"])
    return TrainConfig(**file_cfg), SyntheticSpec(**data_cfg)


def _ensure_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    config, spec = _build_configs(args)
    out = _ensure_out(args)
    task = generate_synthetic(spec)
    result = run_training(config, task)
    write_metrics_csv(result.records, out / "metrics.csv")
    write_summary_json(result.summary, out / "summary.json")
    save_checkpoint(result.initial_net, out / "initial.rsa1")
    save_checkpoint(result.net, out / "model.rsa1")
    last = result.records[-1]
    print(f"method={config.method} rank={config.rank} epochs={config.epochs} "
          f"lr={config.lr}")
    print(f"final train loss {last.train_loss:.6e}  "
          f"final val loss {last.val_loss:.6e}")
    print(f"trainable params {last.trainable_params}  "
          f"factorize events {result.summary['factorize_events']}")
    print(f"wrote {out / 'metrics.csv'}, {out / 'summary.json'}, "
          f"{out / 'initial.rsa1'}, {out / 'model.rsa1'}")
    return 0


def cmd_theorem(args) -> int:
    report = run_theorem_suite(seed=args.seed if args.seed is not None else 0)
    inst = report["instance"]
    print(f"instance: n={inst['n']} d={inst['d']} p={inst['p']} "
          f"residual rank {inst['residual_rank']} seed {inst['seed']}")
    print(f"{'rank':>4} {'T_pred':>6} {'observed':>8} {'rel_err@T':>12} "
          f"{'rel_err@T-1':>12} {'bound_ok':>8}")
    for case in report["cases"]:
        before = case["rel_error_before_t"]
        before_text = "-" if before is None else f"{before:.3e}"
        print(f"{case['rank']:>4} {case['t_predicted']:>6} "
              f"{case['observed_step']!s:>8} {case['rel_error_at_t']:>12.3e} "
              f"{before_text:>12} {str(case['bound_attained']):>8}")
    noisy = report["noisy_case"]
    print(f"noisy plateau {noisy['plateau_error']:.6e} vs irreducible "
          f"{noisy['irreducible_error']:.6e} ok={noisy['plateau_ok']}")
    print(f"all_ok={report['all_ok']}")
    if args.out:
        out = _ensure_out(args)
        with open(out / "theorem.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {out / 'theorem.json'}")
    return 0 if report["all_ok"] else 3


def cmd_spectrum(args) -> int:
    initial = load_checkpoint(args.initial)
    final = load_checkpoint(args.final)
    report = spectrum_report(initial, final)
    out = _ensure_out(args)
    write_spectrum_csv(report, out / "spectrum.csv")
    for entry in report:
        sigma = entry["sigma"]
        cumulative = entry["cumulative"]
        if cumulative and cumulative[-1] > 0.0:
            k90 = next(j for j, c in enumerate(cumulative) if c >= 0.9) + 1
            print(f"layer {entry['layer']}: top sigma {sigma[0]:.4e}, "
                  f"{k90} of {len(sigma)} directions hold 90% of the mass")
        else:
            print(f"layer {entry['layer']}: no drift")
    print(f"wrote {out / 'spectrum.csv'}")
    return 0


def _grid_common(args) -> tuple:
    file_cfg = _load_config_file(args.config) if args.config else {}
    data_cfg = file_cfg.get("data", {})
    if not isinstance(data_cfg, dict):
        raise ConfigError("data", "must be a JSON object")
    unknown = set(data_cfg) - _field_names(SyntheticSpec)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown data config field")
    if "layer_dims" in data_cfg:
        data_cfg["layer_dims"] = tuple(data_cfg["layer_dims"])
    spec = SyntheticSpec(**data_cfg)
    task = generate_synthetic(spec)
    rank = args.rank if args.rank is not None else 12
    epochs = args.epochs if args.epochs is not None else 100
    seed = args.seed if args.seed is not None else 0
    return task, rank, epochs, seed


def cmd_ablate(args) -> int:
    task, rank, epochs, seed = _grid_common(args)
    grid = run_ablation_grid(task, rank, epochs=epochs, seed=seed)
    print(f"{'variant':>20} {'best_lr':>8} {'final_val_loss':>14}")
    for row in grid["rows"]:
        print(f"{row['variant']:>20} {row['best_lr']:>8} "
              f"{row['final_val_loss']:>14.6e}")
    print(f"expected ordering (full <= init+factorize <= init-only) held: "
          f"{grid['expected_order_held']}")
    out = _ensure_out(args)
    with open(out / "ablate.json", "w", encoding="utf-8") as fh:
        json.dump(grid, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out / 'ablate.json'}")
    return 0


def cmd_schemes(args) -> int:
    task, rank, epochs, seed = _grid_common(args)
    grid = run_scheme_grid(task, rank, epochs=epochs, seed=seed)
    print(f"{'scheme':>8} {'best_lr':>8} {'final_val_loss':>14}")
    for row in grid["rows"]:
        print(f"{row['scheme']:>8} {row['best_lr']:>8} "
              f"{row['final_val_loss']:>14.6e}")
    out = _ensure_out(args)
    with open(out / "schemes.json", "w", encoding="utf-8") as fh:
        json.dump(grid, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out / 'schemes.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rosa",
        description="Subspace adaptation experiments: training, exact "
                    "solvers, and spectrum analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one adapted network")
    train.add_argument("--config", help="JSON config file")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--method", choices=["ft", "lora", "rosa", "ia3"])
    train.add_argument("--rank", type=int)
    train.add_argument("--factorize-every", type=int, dest="factorize_every")
    train.add_argument("--factorize-unit", choices=["steps", "epochs"],
                       dest="factorize_unit")
    train.add_argument("--scheme", choices=["random", "top", "bottom"])
    train.add_argument("--ablation",
                       choices=["full", "svd_init_factorize", "svd_init_only"])
    train.add_argument("--lr", type=float)
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", type=int)
    train.set_defaults(func=cmd_train)

    theorem = sub.add_parser("theorem", help="run the exact-convergence suite")
    theorem.add_argument("--seed", type=int)
    theorem.add_argument("--out", help="optional output directory")
    theorem.set_defaults(func=cmd_theorem)

    spectrum = sub.add_parser("spectrum",
                              help="residual spectrum between two checkpoints")
    spectrum.add_argument("initial", help="checkpoint at initialization")
    spectrum.add_argument("final", help="checkpoint after training")
    spectrum.add_argument("--out", required=True, help="output directory")
    spectrum.set_defaults(func=cmd_spectrum)

    ablate = sub.add_parser("ablate", help="staged-variant comparison grid")
    schemes = sub.add_parser("schemes", help="sampling-scheme comparison grid")
    for grid_parser in (ablate, schemes):
        grid_parser.add_argument("--config", help="JSON config file (data section)")
        grid_parser.add_argument("--out", required=True, help="output directory")
        grid_parser.add_argument("--rank", type=int)
        grid_parser.add_argument("--epochs", type=int)
        grid_parser.add_argument("--seed", type=int)
    ablate.set_defaults(func=cmd_ablate)
    schemes.set_defaults(func=cmd_schemes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckpointFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (NumericError, RosaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
