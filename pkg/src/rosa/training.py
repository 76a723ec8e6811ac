"""Minibatch training of adapted networks, with per-epoch metrics.

The loop is deterministic: a single Generator seeded from the config
drives adapter initialization, batch shuffling, and subspace re-sampling,
in a fixed consumption order, so identical configs give bit-identical
metric sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .adapters import (RosaAdapter, full_init, ia3_init, lora_init,
                       matrix_param_count, rosa_init, trainable_reduction)
from .errors import ConfigError, ContractViolationError, NumericError
from .linalg import SamplingScheme, numerical_rank
from .network import (DenseLayer, Mlp, backward, forward, mse_loss,
                      mse_loss_gradient, predict)
from .optim import AdamW, Sgd
from .synthetic import SyntheticTask

METHODS = ("ft", "lora", "rosa", "ia3")
ABLATIONS = ("full", "svd_init_factorize", "svd_init_only")
_RESIDUAL_RANK_TOL = 1e-8


@dataclass
class TrainConfig:
    method: str = "rosa"
    rank: int | None = None
    factorize_every: int = 1
    factorize_unit: str = "epochs"
    scheme: str = "random"
    ablation: str = "full"
    optimizer: str = "adamw"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-6
    weight_decay: float = 0.0
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    reset_moments_on_factorize: bool = True
    literal_zero_init: bool = False

    def __post_init__(self):
        self.method = str(self.method).lower()
        self.scheme = str(self.scheme).lower()
        self.ablation = str(self.ablation).lower()
        self.optimizer = str(self.optimizer).lower()
        self.factorize_unit = str(self.factorize_unit).lower()
        if self.method not in METHODS:
            raise ConfigError("method", f"must be one of {METHODS}, got '{self.method}'")
        needs_rank = self.method in ("rosa", "lora")
        if needs_rank and self.rank is None:
            raise ConfigError("rank", f"required for method '{self.method}'")
        if not needs_rank and self.rank is not None:
            raise ConfigError("rank", f"must be omitted for method '{self.method}'")
        if self.rank is not None and self.rank < 1:
            raise ConfigError("rank", f"must be >= 1, got {self.rank}")
        if self.factorize_every < 1:
            raise ConfigError("factorize_every", f"must be >= 1, got {self.factorize_every}")
        if self.factorize_unit not in ("steps", "epochs"):
            raise ConfigError("factorize_unit",
                              f"must be 'steps' or 'epochs', got '{self.factorize_unit}'")
        if self.scheme not in ("random", "top", "bottom"):
            raise ConfigError("scheme", f"must be random/top/bottom, got '{self.scheme}'")
        if self.ablation not in ABLATIONS:
            raise ConfigError("ablation", f"must be one of {ABLATIONS}, got '{self.ablation}'")
        if self.ablation != "full" and self.method != "rosa":
            raise ConfigError("ablation",
                              f"'{self.ablation}' only applies to method 'rosa'")
        if self.literal_zero_init and self.method != "rosa":
            raise ConfigError("literal_zero_init", "only applies to method 'rosa'")
        if self.optimizer not in ("sgd", "adamw"):
            raise ConfigError("optimizer", f"must be 'sgd' or 'adamw', got '{self.optimizer}'")
        if not self.lr > 0.0:
            raise ConfigError("lr", f"must be > 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(name, f"must be in [0, 1), got {value}")
        if not self.epsilon > 0.0:
            raise ConfigError("epsilon", f"must be > 0, got {self.epsilon}")
        if self.weight_decay < 0.0:
            raise ConfigError("weight_decay", f"must be >= 0, got {self.weight_decay}")
        if self.epochs < 1:
            raise ConfigError("epochs", f"must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError("batch_size", f"must be >= 1, got {self.batch_size}")

    def scheme_enum(self) -> SamplingScheme:
        return SamplingScheme(self.scheme)


@dataclass
class MetricsRecord:
    """One row per epoch. residual_ranks counts, per layer, the numerical
    rank of the effective weight's drift from the pretrained matrix."""

    epoch: int
    step: int
    train_loss: float
    val_loss: float
    trainable_params: int
    factorize_event: bool
    residual_ranks: tuple[int, ...]


@dataclass
class TrainResult:
    records: list[MetricsRecord]
    net: Mlp
    initial_net: Mlp
    summary: dict


def adapt_network(base: Mlp, config: TrainConfig,
                  rng: np.random.Generator) -> Mlp:
    """Wrap each layer of the base net in the configured adapter.

    Weights and biases are copied from the base; biases stay trainable in
    every method.
    """
    layers = []
    for layer in base.layers:
        w = layer.adapter.effective_weight()
        if config.method == "ft":
            adapter = full_init(w)
        elif config.method == "lora":
            adapter = lora_init(w, config.rank, rng)
        elif config.method == "ia3":
            adapter = ia3_init(w)
        else:
            adapter = rosa_init(
                w, config.rank, config.scheme_enum(), rng,
                factorize_at_init=not config.literal_zero_init,
                subtract_at_init=config.ablation != "svd_init_only",
            )
        layers.append(DenseLayer(adapter=adapter, bias=layer.bias.copy(),
                                 activation=layer.activation))
    return Mlp(layers=layers)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(learning_rate=config.lr)
    return AdamW(learning_rate=config.lr, beta1=config.beta1, beta2=config.beta2,
                 epsilon=config.epsilon, weight_decay=config.weight_decay)


def _factorize_rosa_layers(net: Mlp, optimizer, config: TrainConfig,
                           rng: np.random.Generator) -> None:
    for i, layer in enumerate(net.layers):
        if isinstance(layer.adapter, RosaAdapter):
            layer.adapter.factorize(rng)
            if config.reset_moments_on_factorize and isinstance(optimizer, AdamW):
                optimizer.reset_moments(i, ("a", "b"))
    net.bump()


def _drift_ranks(net: Mlp, initial_weights: list) -> tuple[int, ...]:
    """Numerical rank of each layer's move away from its starting weight."""
    return tuple(
        numerical_rank(layer.adapter.effective_weight() - w0, _RESIDUAL_RANK_TOL)
        for layer, w0 in zip(net.layers, initial_weights)
    )


def run_training(config: TrainConfig, task: SyntheticTask) -> TrainResult:
    """Train an adapted copy of task.base against the teacher's data.

    Returns the per-epoch records, the trained net, a snapshot of the net
    at initialization, and a summary dict. Raises NumericError the moment
    a loss stops being finite. For LoRA runs the final drift of every
    layer is checked to have numerical rank at most the configured rank;
    a violation raises ContractViolationError.
    """
    rng = np.random.default_rng(config.seed)
    net = adapt_network(task.base, config, rng)
    initial_net = net.copy()
    initial_weights = [layer.adapter.effective_weight()
                       for layer in initial_net.layers]
    optimizer = make_optimizer(config)
    n = task.x_train.shape[1]
    batch = min(config.batch_size, n)
    schedule_on = config.method == "rosa" and config.ablation == "full"
    records: list[MetricsRecord] = []
    trainable_params = sum(matrix_param_count(layer.adapter) + layer.bias.size
                           for layer in net.layers)
    global_step = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        event = False
        sq_sum = 0.0
        for start in range(0, n, batch):
            if (schedule_on and config.factorize_unit == "steps"
                    and (global_step + 1) % config.factorize_every == 0):
                _factorize_rosa_layers(net, optimizer, config, rng)
                event = True
            cols = perm[start:start + batch]
            xb = task.x_train[:, cols]
            yb = task.y_train[:, cols]
            pred, cache = forward(net, xb)
            loss = mse_loss(pred, yb)
            if not math.isfinite(loss):
                raise NumericError(
                    f"train loss became non-finite at epoch {epoch}, "
                    f"step {global_step}"
                )
            sq_sum += loss * cols.size
            grads = backward(net, cache, mse_loss_gradient(pred, yb))
            optimizer.step(net, grads)
            global_step += 1
        if (schedule_on and config.factorize_unit == "epochs"
                and epoch % config.factorize_every == 0):
            _factorize_rosa_layers(net, optimizer, config, rng)
            event = True
        train_loss = sq_sum / n
        val_loss = mse_loss(predict(net, task.x_val), task.y_val)
        if not math.isfinite(val_loss):
            raise NumericError(f"validation loss became non-finite at epoch {epoch}")
        records.append(MetricsRecord(
            epoch=epoch,
            step=global_step,
            train_loss=train_loss,
            val_loss=val_loss,
            trainable_params=trainable_params,
            factorize_event=event,
            residual_ranks=_drift_ranks(net, initial_weights),
        ))
    lora_check = None
    if config.method == "lora":
        # The adapter's own residual is exactly a @ b, free of the
        # cancellation noise of differencing effective weights.
        ranks = tuple(numerical_rank(layer.adapter.residual(), _RESIDUAL_RANK_TOL)
                      for layer in net.layers)
        if any(r > config.rank for r in ranks):
            raise ContractViolationError(
                f"low-rank drift bound violated: ranks {ranks} "
                f"exceed configured rank {config.rank}"
            )
        lora_check = {"residual_ranks": list(ranks), "bound": config.rank, "ok": True}
    summary = _summarize(config, net, records, lora_check)
    return TrainResult(records=records, net=net, initial_net=initial_net,
                       summary=summary)


def _summarize(config: TrainConfig, net: Mlp, records: list[MetricsRecord],
               lora_check: dict | None) -> dict:
    matrix_counts = [matrix_param_count(layer.adapter) for layer in net.layers]
    bias_counts = [layer.bias.size for layer in net.layers]
    reductions = None
    if config.method in ("rosa", "lora"):
        reductions = [trainable_reduction(layer.adapter.shape[0],
                                          layer.adapter.shape[1], config.rank)
                      for layer in net.layers]
    return {
        "config": asdict(config),
        "final_train_loss": records[-1].train_loss,
        "final_val_loss": records[-1].val_loss,
        "best_val_loss": min(r.val_loss for r in records),
        "trainable_params": {
            "total": sum(matrix_counts) + sum(bias_counts),
            "matrix": sum(matrix_counts),
            "bias": sum(bias_counts),
            "matrix_per_layer": matrix_counts,
        },
        "trainable_reduction_per_layer": reductions,
        "factorize_events": sum(1 for r in records if r.factorize_event),
        "final_residual_ranks": list(records[-1].residual_ranks),
        "lora_rank_check": lora_check,
    }


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    """Write one CSV row per record. Floats use repr, so equal runs give
    byte-identical files."""
    if not records:
        raise ValueError("no records to write")
    n_layers = len(records[0].residual_ranks)
    header = ["epoch", "step", "train_loss", "val_loss", "trainable_params",
              "factorize_event"]
    header += [f"residual_rank_{i}" for i in range(n_layers)]
    lines = [",".join(header)]
    for r in records:
        row = [str(r.epoch), str(r.step), repr(r.train_loss), repr(r.val_loss),
               str(r.trainable_params), str(int(r.factorize_event))]
        row += [str(v) for v in r.residual_ranks]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
