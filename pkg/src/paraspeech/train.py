"""Training loop: masked reconstruction with losses over the current sentence.

Every step samples batch_size examples, runs them through the model one at a
time (gradients accumulate — the model is unbatched, so there is never any
padding to exclude), clips the global gradient norm, and applies one AdamW
update (decoupled L2, transformer-style betas/epsilon).  The learning rate warms
up linearly and then decays exponentially; metrics stream to a JSON Lines
log and checkpoints are written atomically.
"""

import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np
import torch

from .context import assemble_example, build_window
from .errors import InvalidConfig, InvalidInput, NumericalError
from .model import TRAIN, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    max_steps: int = 200_000
    warmup_steps: int = 4000
    peak_lr: float = 1e-3
    decay_rate: float = 0.99995
    inverse_sqrt: bool = False  # noam-style decay instead of exponential
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    weight_decay: float = 1e-5
    grad_clip_norm: float = 1.0
    seed: int = 0
    checkpoint_every: int = 1000
    valid_every: int = 1000
    semantic_context_l: int = 2
    acoustic_context: int = 1
    mel_before_weight: float = 1.0
    mel_after_weight: float = 1.0
    duration_weight: float = 1.0
    pitch_weight: float = 1.0
    energy_weight: float = 1.0

    def __post_init__(self):
        if self.warmup_steps >= self.max_steps:
            raise InvalidConfig("warmup_steps must be below max_steps")
        for name in ("peak_lr", "decay_rate", "adam_beta1", "adam_beta2", "adam_eps"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.batch_size < 1 or self.warmup_steps < 1:
            raise InvalidConfig("batch_size and warmup_steps must be >= 1")


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to peak_lr, then per-step exponential decay (or
    inverse-sqrt when cfg.inverse_sqrt)."""
    if step < 1:
        raise InvalidInput("schedule is defined for step >= 1")
    if step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    if cfg.inverse_sqrt:
        return cfg.peak_lr * math.sqrt(cfg.warmup_steps / step)
    return cfg.peak_lr * cfg.decay_rate ** (step - cfg.warmup_steps)


@dataclass
class LossBreakdown:
    mel_before_mae: torch.Tensor
    mel_after_mae: torch.Tensor
    duration_mse: torch.Tensor
    pitch_mse: torch.Tensor
    energy_mse: torch.Tensor
    total: torch.Tensor

    def to_floats(self):
        return {k: float(v.detach()) for k, v in vars(self).items()}


def compute_losses(outputs, example, cfg: TrainConfig = None) -> LossBreakdown:
    """Losses over the current sentence only; context rows never contribute.

    Mel terms are MAE over the current frame span (before and after the
    PostNet); duration/pitch/energy are MSE over the current phoneme span,
    all in their log(x+1) prediction domains.
    """
    cfg = cfg or TrainConfig()
    fs, fe = example.current_frame_span
    ps, pe = example.current_phoneme_span
    device = outputs.mel_before.device
    dtype = outputs.mel_before.dtype
    target_mel = torch.as_tensor(example.mel_target[fs:fe], dtype=dtype, device=device)

    mel_before_mae = (outputs.mel_before[fs:fe] - target_mel).abs().mean()
    mel_after_mae = (outputs.mel_after[fs:fe] - target_mel).abs().mean()

    def span_target(values):
        return torch.as_tensor(values[ps:pe], dtype=dtype, device=device)

    duration_mse = (
        outputs.log_duration_pred[ps:pe]
        - torch.log1p(span_target(example.durations.astype(np.float64)))
    ).square().mean()
    pitch_mse = (
        outputs.pitch_pred[ps:pe] - torch.log1p(span_target(example.pitch_ph))
    ).square().mean()
    energy_mse = (
        outputs.energy_pred[ps:pe] - torch.log1p(span_target(example.energy_ph))
    ).square().mean()

    total = (
        cfg.mel_before_weight * mel_before_mae
        + cfg.mel_after_weight * mel_after_mae
        + cfg.duration_weight * duration_mse
        + cfg.pitch_weight * pitch_mse
        + cfg.energy_weight * energy_mse
    )
    breakdown = LossBreakdown(
        mel_before_mae, mel_after_mae, duration_mse, pitch_mse, energy_mse, total
    )
    for name, value in vars(breakdown).items():
        if not torch.isfinite(value):
            raise NumericalError(f"{name} is not finite")
    return breakdown


class Trainer:
    """Runs the optimization loop over a prepared feature store."""

    MAX_CONSECUTIVE_SKIPS = 10

    def __init__(self, model, store, pbes, cfg: TrainConfig, out_dir):
        self.model = model
        self.store = store
        self.cfg = cfg
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.optimizer = torch.optim.AdamW(
            model.parameters(),
            lr=cfg.peak_lr / cfg.warmup_steps,
            betas=(cfg.adam_beta1, cfg.adam_beta2),
            eps=cfg.adam_eps,
            weight_decay=cfg.weight_decay,
        )
        self._examples = {}
        for pid in store.paragraphs:
            para = store.paragraph(pid)
            for idx, utt in enumerate(para):
                example = assemble_example(
                    build_window(para, idx, cfg.semantic_context_l),
                    store.vocab,
                    acoustic_context=cfg.acoustic_context,
                )
                self._examples[utt.utterance_id] = (example, pbes[utt.utterance_id])
        self.train_ids = sorted(store.splits.get("train", []))
        self.valid_ids = sorted(store.splits.get("valid", []))
        if not self.train_ids:
            raise InvalidInput("no utterances in the train split")

    def _batches(self, rng):
        """Cycle shuffled epochs forever, batch_size ids at a time."""
        pool = []
        while True:
            if len(pool) < self.cfg.batch_size:
                pool.extend(np.array(self.train_ids)[rng.permutation(len(self.train_ids))])
            yield [pool.pop(0) for _ in range(self.cfg.batch_size)]

    def _step(self, batch):
        self.optimizer.zero_grad(set_to_none=True)
        sums = None
        for uid in batch:
            example, pbe = self._examples[uid]
            outputs = self.model(example, pbe, mode=TRAIN)
            breakdown = compute_losses(outputs, example, self.cfg)
            (breakdown.total / len(batch)).backward()
            floats = breakdown.to_floats()
            sums = floats if sums is None else {
                k: sums[k] + v for k, v in floats.items()
            }
        grad_norm = torch.nn.utils.clip_grad_norm_(
            self.model.parameters(), self.cfg.grad_clip_norm
        )
        if not torch.isfinite(grad_norm):
            raise NumericalError("gradient norm is not finite")
        self.optimizer.step()
        return {k: v / len(batch) for k, v in sums.items()}, float(grad_norm)

    def _validate(self):
        if not self.valid_ids:
            return None
        self.model.eval()
        total = 0.0
        with torch.no_grad():
            for uid in self.valid_ids:
                example, pbe = self._examples[uid]
                outputs = self.model(example, pbe, mode=TRAIN)
                total += float(compute_losses(outputs, example, self.cfg).mel_after_mae)
        self.model.train()
        return total / len(self.valid_ids)

    def run(self, max_steps=None):
        """Train for max_steps (default cfg.max_steps); returns the final
        checkpoint path."""
        cfg = self.cfg
        max_steps = max_steps or cfg.max_steps
        torch.manual_seed(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        batches = self._batches(rng)
        self.model.train()
        consecutive_skips = 0
        metrics_path = os.path.join(self.out_dir, "metrics.jsonl")
        with open(metrics_path, "a", encoding="utf-8") as log:
            for step in range(1, max_steps + 1):
                lr = lr_schedule(step, cfg)
                for group in self.optimizer.param_groups:
                    group["lr"] = lr
                started = time.monotonic()
                batch = next(batches)
                try:
                    means, grad_norm = self._step(batch)
                except NumericalError as exc:
                    consecutive_skips += 1
                    log.write(json.dumps({
                        "step": step, "lr": lr, "skipped": True, "reason": str(exc),
                    }, sort_keys=True) + "\n")
                    if consecutive_skips >= self.MAX_CONSECUTIVE_SKIPS:
                        raise NumericalError(
                            f"{consecutive_skips} consecutive non-finite steps"
                        ) from exc
                    continue
                consecutive_skips = 0
                entry = {
                    "step": step,
                    "lr": lr,
                    "grad_norm": grad_norm,
                    "wall_ms": (time.monotonic() - started) * 1000.0,
                    **means,
                }
                if cfg.valid_every and step % cfg.valid_every == 0:
                    valid = self._validate()
                    if valid is not None:
                        entry["valid_mel_after_mae"] = valid
                log.write(json.dumps(entry, sort_keys=True) + "\n")
                log.flush()
                if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                    save_checkpoint(
                        self.model,
                        os.path.join(self.out_dir, f"checkpoint_{step:06d}.rec"),
                        step=step,
                    )
        final = os.path.join(self.out_dir, "model.rec")
        save_checkpoint(self.model, final, step=max_steps)
        return final
