"""Experiment drivers shared by the CLI, the scripts, and the test suite.

Three families: the exact-solver suite on linear instances, learning-rate
sweeps of the synthetic teacher-student task, and the residual-spectrum
report comparing two networks.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import InvalidInputError
from .exact import (achieved_error, irreducible_error, lora_error_lower_bound,
                    predicted_rounds, realizable_instance, rosa_exact_iterate,
                    rrr_optimum, with_off_range_noise)
from .linalg import singular_values
from .network import Mlp
from .synthetic import SyntheticTask
from .training import TrainConfig, run_training

# Default learning-rate grid for best-of sweeps.
LR_GRID = (2e-2, 2e-3, 2e-4, 2e-5)

CONVERGED_REL = 1e-12
STRICT_BEFORE_REL = 1e-6


def run_theorem_suite(n: int = 40, d: int = 16, p: int = 8,
                      residual_rank: int = 6,
                      ranks: tuple[int, ...] = (1, 2, 3, 6),
                      seed: int = 0, extra_steps: int = 2,
                      noise_scale: float = 0.5) -> dict:
    """Exercise the exact greedy solver on one realizable instance.

    For each correction rank: predicted vs observed round counts (observed
    means relative error at most 1e-12 of ||y||_F^2), the error one round
    before convergence, and the gap between the closed-form optimum's
    above-floor error and the rank-limited lower bound. A noisy variant of
    the instance checks the plateau at the irreducible error. The report is
    JSON-serializable; 'all_ok' summarizes every check.
    """
    problem = realizable_instance(n, d, p, residual_rank, seed)
    y_scale = float(np.sum(problem.y ** 2))
    all_ok = True
    cases = []
    for rank in ranks:
        t_pred = predicted_rounds(problem, rank)
        trace = rosa_exact_iterate(problem, rank, t_pred + extra_steps)
        rel = [err / y_scale for err in trace.errors]
        observed = next((t for t, r in enumerate(rel) if r <= CONVERGED_REL), None)
        rel_before = rel[t_pred - 1] if t_pred >= 1 else None
        a, b = rrr_optimum(problem, rank)
        above_floor = achieved_error(problem, a, b) - irreducible_error(problem)
        bound = lora_error_lower_bound(problem, rank)
        bound_gap = abs(above_floor - bound)
        bound_ok = bound_gap <= 1e-8 * max(bound, 1e-10 * y_scale)
        converged_ok = observed == t_pred
        strict_ok = rel_before is None or rel_before > STRICT_BEFORE_REL
        all_ok = all_ok and bound_ok and converged_ok and strict_ok
        cases.append({
            "rank": rank,
            "t_predicted": t_pred,
            "observed_step": observed,
            "rel_error_at_t": rel[t_pred],
            "rel_error_before_t": rel_before,
            "lora_bound": bound,
            "rrr_error_above_floor": above_floor,
            "bound_attained": bound_ok,
            "converged_at_t": converged_ok,
            "strict_before_t": strict_ok,
        })
    noisy = with_off_range_noise(problem, noise_scale, seed + 1)
    rank_n = min(ranks)
    trace_n = rosa_exact_iterate(noisy, rank_n,
                                 predicted_rounds(noisy, rank_n) + extra_steps)
    floor = irreducible_error(noisy)
    plateau = trace_n.errors[-1]
    plateau_ok = abs(plateau - floor) <= 1e-9 * max(floor, 1.0)
    all_ok = all_ok and plateau_ok
    return {
        "instance": {"n": n, "d": d, "p": p, "residual_rank": residual_rank,
                     "seed": seed},
        "cases": cases,
        "noisy_case": {"rank": rank_n, "noise_scale": noise_scale,
                       "plateau_error": plateau, "irreducible_error": floor,
                       "plateau_ok": plateau_ok},
        "all_ok": all_ok,
    }


def sweep_learning_rates(task: SyntheticTask, base_config: TrainConfig,
                         lrs: tuple[float, ...] = LR_GRID) -> dict:
    """Run one configuration at each learning rate, keep the best.

    Best means lowest final validation loss. Returns the winning
    TrainResult under 'best' plus a JSON-friendly per-rate row list.
    """
    if not lrs:
        raise InvalidInputError("learning-rate grid is empty")
    best_result = None
    best_lr = None
    rows = []
    for lr in lrs:
        result = run_training(replace(base_config, lr=lr), task)
        rows.append({
            "lr": lr,
            "final_val_loss": result.summary["final_val_loss"],
            "best_val_loss": result.summary["best_val_loss"],
            "final_train_loss": result.summary["final_train_loss"],
        })
        if (best_result is None
                or result.summary["final_val_loss"]
                < best_result.summary["final_val_loss"]):
            best_result = result
            best_lr = lr
    return {"best": best_result, "best_lr": best_lr, "rows": rows}


def run_method_comparison(task: SyntheticTask,
                          entries: list[tuple[str, int | None]], *,
                          epochs: int, lrs: tuple[float, ...] = LR_GRID,
                          seed: int = 0, batch_size: int = 128,
                          factorize_every: int = 1) -> list[dict]:
    """Best-of-LR sweep for each (method, rank) entry on one task."""
    cells = []
    for method, rank in entries:
        base = TrainConfig(method=method, rank=rank, epochs=epochs, seed=seed,
                           batch_size=batch_size,
                           factorize_every=factorize_every)
        sweep = sweep_learning_rates(task, base, lrs)
        cells.append({
            "method": method,
            "rank": rank,
            "best_lr": sweep["best_lr"],
            "final_val_loss": sweep["best"].summary["final_val_loss"],
            "result": sweep["best"],
            "lr_rows": sweep["rows"],
        })
    return cells


def run_ablation_grid(task: SyntheticTask, rank: int, *, epochs: int,
                      lrs: tuple[float, ...] = LR_GRID, seed: int = 0,
                      batch_size: int = 128, factorize_every: int = 1) -> dict:
    """Compare LoRA against the three staged variants of the subspace method.

    Variants: init from the decomposition but added on top of the intact
    weight; init with the decomposed slice split out of the weight; and the
    full method with scheduled re-sampling. The observed ordering of final
    validation losses is reported, not asserted, since it is a stochastic
    tendency rather than a guarantee.
    """
    variants = [
        ("lora", TrainConfig(method="lora", rank=rank, epochs=epochs,
                             seed=seed, batch_size=batch_size)),
        ("svd_init_only", TrainConfig(method="rosa", rank=rank,
                                      ablation="svd_init_only", epochs=epochs,
                                      seed=seed, batch_size=batch_size)),
        ("svd_init_factorize", TrainConfig(method="rosa", rank=rank,
                                           ablation="svd_init_factorize",
                                           epochs=epochs, seed=seed,
                                           batch_size=batch_size)),
        ("full", TrainConfig(method="rosa", rank=rank, ablation="full",
                             epochs=epochs, seed=seed, batch_size=batch_size,
                             factorize_every=factorize_every)),
    ]
    rows = []
    by_name = {}
    for name, config in variants:
        sweep = sweep_learning_rates(task, config, lrs)
        loss = sweep["best"].summary["final_val_loss"]
        by_name[name] = loss
        rows.append({"variant": name, "best_lr": sweep["best_lr"],
                     "final_val_loss": loss, "lr_rows": sweep["rows"]})
    expected_order_held = (by_name["full"] <= by_name["svd_init_factorize"]
                          <= by_name["svd_init_only"])
    return {"rank": rank, "rows": rows,
            "expected_order_held": bool(expected_order_held)}


def run_scheme_grid(task: SyntheticTask, rank: int, *, epochs: int,
                    lrs: tuple[float, ...] = LR_GRID, seed: int = 0,
                    batch_size: int = 128, factorize_every: int = 1) -> dict:
    """Compare index-sampling schemes for the full subspace method."""
    rows = []
    for scheme in ("top", "bottom", "random"):
        config = TrainConfig(method="rosa", rank=rank, scheme=scheme,
                             epochs=epochs, seed=seed, batch_size=batch_size,
                             factorize_every=factorize_every)
        sweep = sweep_learning_rates(task, config, lrs)
        rows.append({"scheme": scheme, "best_lr": sweep["best_lr"],
                     "final_val_loss": sweep["best"].summary["final_val_loss"],
                     "lr_rows": sweep["rows"]})
    return {"rank": rank, "rows": rows}


def spectrum_report(initial: Mlp, final: Mlp) -> list[dict]:
    """Per-layer singular values of the effective-weight drift.

    Each entry holds the descending singular values of
    final_effective - initial_effective and their running sums normalized
    by the total, so the last cumulative value is 1 (or 0 for a layer that
    did not move).
    """
    if len(initial.layers) != len(final.layers):
        raise InvalidInputError(
            f"networks have different depths: {len(initial.layers)} "
            f"vs {len(final.layers)}"
        )
    report = []
    for i, (first, last) in enumerate(zip(initial.layers, final.layers)):
        w0 = first.adapter.effective_weight()
        w1 = last.adapter.effective_weight()
        if w0.shape != w1.shape:
            raise InvalidInputError(
                f"layer {i} shapes differ: {w0.shape} vs {w1.shape}"
            )
        sigma = singular_values(w1 - w0)
        total = float(sigma.sum())
        if total > 0.0:
            cumulative = np.cumsum(sigma) / total
        else:
            cumulative = np.zeros_like(sigma)
        report.append({"layer": i, "sigma": sigma.tolist(),
                       "cumulative": cumulative.tolist()})
    return report


def write_spectrum_csv(report: list[dict], path) -> None:
    lines = ["layer,index,sigma,cumulative_fraction"]
    for entry in report:
        for j, (s, c) in enumerate(zip(entry["sigma"], entry["cumulative"])):
            lines.append(f"{entry['layer']},{j},{s!r},{c!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def strip_results(cells: list[dict]) -> list[dict]:
    """Copy of comparison cells without the in-memory TrainResult objects."""
    out = []
    for cell in cells:
        slim = {k: v for k, v in cell.items() if k != "result"}
        out.append(slim)
    return out
