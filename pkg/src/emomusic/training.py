"""Training loop: Adam, inverse-square-root schedule, checkpoints, loss log."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmoMusicError
from .model import ModelConfig, ModelState, forward_batch, init_state, next_token_loss
from .tokens import PAD


class NonFiniteLoss(EmoMusicError):
    pass


@dataclass(frozen=True, slots=True)
class TrainConfig:
    batch_size: int = 8
    base_lr: float = 1e-4
    warmup_steps: int = 16000
    max_steps: int = 100000
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    grad_clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.warmup_steps < 1:
            raise EmoMusicError("warmup_steps must be >= 1")


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """base_lr * min(step/warmup, sqrt(warmup/step)); peak at step == warmup."""
    if step < 1:
        raise EmoMusicError("schedule is defined for steps >= 1")
    return cfg.base_lr * min(step / cfg.warmup_steps,
                             math.sqrt(cfg.warmup_steps / step))


@dataclass(slots=True)
class Adam:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def step(self, params: dict, lr: float) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradients(params: dict, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


def make_batches(n_samples: int, batch_size: int,
                 rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n_samples)
    return [order[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def pad_batch(sequences: list[list[int]], max_len: int) -> np.ndarray:
    """Right-pad with PAD to the longest (truncated) sequence in the batch."""
    clipped = [seq[:max_len] for seq in sequences]
    width = max(len(seq) for seq in clipped)
    ids = np.full((len(clipped), width), PAD, dtype=int)
    for i, seq in enumerate(clipped):
        ids[i, :len(seq)] = seq
    return ids


def train(state: ModelState, dataset: list[tuple[list[int], np.ndarray]],
          cfg: TrainConfig, log_every: int = 1,
          ) -> tuple[ModelState, list[tuple[int, float, float]]]:
    """Self-supervised next-token training.

    Each dataset entry pairs a token sequence with the binarized attribute
    vector extracted from that same sequence's score. Returns the trained
    state and a (step, lr, loss) log. Deterministic given cfg.seed and a
    fixed BLAS thread count.
    """
    if not dataset:
        raise EmoMusicError("empty training dataset")
    params = state.params
    optimizer = Adam(cfg.beta1, cfg.beta2, cfg.eps)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    dropout_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    log: list[tuple[int, float, float]] = []
    step = 0
    while step < cfg.max_steps:
        for batch_idx in make_batches(len(dataset), cfg.batch_size, shuffle_rng):
            step += 1
            ids = pad_batch([dataset[i][0] for i in batch_idx], state.config.max_len)
            bits = np.stack([dataset[i][1] for i in batch_idx]).astype(float)
            for p in params.values():
                p.grad = None
            logits = forward_batch(state, ids, bits,
                                   rng=dropout_rng if state.config.dropout > 0 else None)
            loss, _ = next_token_loss(logits, ids)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteLoss(f"loss became {value} at step {step}")
            loss.backward()
            clip_gradients(params, cfg.grad_clip_norm)
            lr = lr_schedule(step, cfg)
            optimizer.step(params, lr)
            if step % log_every == 0 or step == cfg.max_steps:
                log.append((step, lr, value))
            if step >= cfg.max_steps:
                break
    return state, log


def save_loss_log(path: str | Path, log: list[tuple[int, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss"])
        writer.writerows(log)


def save_checkpoint(path: str | Path, state: ModelState, *, step: int = 0,
                    catalog_version: str = "", indices: list[int] | None = None,
                    medians: np.ndarray | None = None) -> None:
    """Binary tensor blob (.npz) plus a JSON manifest (same stem, .json)."""
    path = Path(path)
    np.savez_compressed(path, **{k: p.data for k, p in state.params.items()})
    cfg = state.config
    manifest = {
        "config": {
            "n_layers": cfg.n_layers, "n_heads": cfg.n_heads,
            "d_model": cfg.d_model, "d_ffn": cfg.d_ffn, "max_len": cfg.max_len,
            "vocab_size": cfg.vocab_size, "dropout": cfg.dropout,
            "attr_dim": cfg.attr_dim, "attention": cfg.attention,
        },
        "catalog_version": catalog_version,
        "indices": indices if indices is not None else [],
        "medians": medians.tolist() if medians is not None else [],
        "step": step,
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_checkpoint(path: str | Path) -> tuple[ModelState, dict]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    config = ModelConfig(**manifest["config"])
    state = init_state(config, seed=0)
    blob = np.load(path if path.suffix == ".npz" else path.with_suffix(".npz"))
    for name, p in state.params.items():
        p.data = blob[name]
    return state, manifest
