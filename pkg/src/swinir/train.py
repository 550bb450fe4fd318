"""Toy-scale training loop, Adam optimizer, and the gradient-check harness.

The optimizer/schedule numbers are package defaults (batch Adam with
beta 0.9/0.999, lr halved at 50/75/90% of the run); they are configurable
through TrainConfig. Loss binding follows the task: L1 for
super-resolution, Charbonnier for denoising and artifact reduction.
"""
from __future__ import annotations

import base64
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .degrade import DegradationSpec, degrade_image, sample_patch_pair
from .imageio import ImageBuffer
from .losses import LossConfig, compute_loss, loss_for_task
from .metrics import psnr
from .model import ModelParams, SwinIRConfig, forward, init_params
from .rng import SplitMix64, derive
from .tensor import Tensor, no_grad


class TrainingDiverged(RuntimeError):
    """Loss or gradients went non-finite; the step was aborted."""


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 8
    patch_size: int = 24          # low-quality patch side
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    milestones: Tuple[float, ...] = (0.5, 0.75, 0.9)
    lr_factor: float = 0.5
    val_period: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.iterations < 0 or self.batch_size < 1 or self.patch_size < 1:
            raise ValueError("bad loop sizing")


@dataclass
class TrainState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    rng_state: int = 0
    best_psnr: float = -math.inf

    @classmethod
    def fresh(cls, params: ModelParams, seed: int) -> "TrainState":
        m = {n: np.zeros_like(t.data) for n, t in params.named()}
        v = {n: np.zeros_like(t.data) for n, t in params.named()}
        return cls(m=m, v=v, step=0, rng_state=SplitMix64(seed).state)


def lr_at(cfg: TrainConfig, step: int) -> float:
    lr = cfg.lr
    for frac in cfg.milestones:
        if step >= frac * cfg.iterations:
            lr *= cfg.lr_factor
    return lr


def adam_step(params: ModelParams, state: TrainState, lr: float,
              cfg: TrainConfig) -> None:
    """One bias-corrected Adam update in place; moments live in ``state``.

    Raises TrainingDiverged on any non-finite gradient, leaving the
    parameters untouched.
    """
    named = list(params.named())
    for name, t in named:
        if t.grad is None:
            continue
        if not np.isfinite(t.grad).all():
            raise TrainingDiverged(f"non-finite gradient in {name} at step {state.step}")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in named:
        g = t.grad
        if g is None:
            continue
        if cfg.weight_decay:
            g = g + cfg.weight_decay * t.data
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


# -- datasets -------------------------------------------------------------


@dataclass
class PairDataset:
    """High-quality images plus the degradation that synthesizes inputs."""
    hq_images: List[ImageBuffer]
    spec: DegradationSpec

    def __post_init__(self):
        if not self.hq_images:
            raise ValueError("dataset is empty")

    def sample_batch(self, cfg: TrainConfig, rng: SplitMix64,
                     step: int) -> Tuple[np.ndarray, np.ndarray]:
        lqs, hqs = [], []
        idx = rng.integers(cfg.batch_size, 0, len(self.hq_images))
        for slot in range(cfg.batch_size):
            crop_seed = derive(int(rng.u64(1)[0]), step, slot)
            spec = self.spec
            if spec.kind == "gaussian_noise":
                # fresh noise per crop, still a pure function of the seeds
                spec = replace(spec, seed=derive(crop_seed, 0xA01))
            lq, hq = sample_patch_pair(self.hq_images[int(idx[slot])], spec,
                                       cfg.patch_size, crop_seed)
            lqs.append(np.moveaxis(lq, 2, 0))
            hqs.append(np.moveaxis(hq, 2, 0))
        return np.stack(lqs), np.stack(hqs)


def make_validation_pairs(hq_images: Sequence[ImageBuffer],
                          spec: DegradationSpec) -> List[Tuple[ImageBuffer, ImageBuffer]]:
    out = []
    for i, hq in enumerate(hq_images):
        s = replace(spec, seed=derive(spec.seed, 0x7A1, i)) \
            if spec.kind == "gaussian_noise" else spec
        out.append((degrade_image(hq, s), hq))
    return out


def restore_image(params: ModelParams, lq: ImageBuffer) -> ImageBuffer:
    """Run the network on one image, clamped back to an image buffer."""
    x = Tensor(np.moveaxis(lq.data, 2, 0)[None])
    with no_grad():
        y = forward(params, x)
    arr = np.clip(np.moveaxis(y.data[0], 0, 2), 0.0, 1.0)
    return ImageBuffer(arr.astype(np.float32), color=lq.color)


def validation_psnr(params: ModelParams,
                    pairs: Sequence[Tuple[ImageBuffer, ImageBuffer]],
                    border: int) -> float:
    scores = []
    for lq, hq in pairs:
        restored = restore_image(params, lq)
        scores.append(psnr(restored, hq, border=border))
    return float(np.mean(scores))


# -- the loop -------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams
    state: TrainState
    metrics: List[str] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    best_psnr: float = -math.inf
    diverged: bool = False


def _metrics_line(step: int, loss: float, val: float, lr: float) -> str:
    return f"step {step} loss {loss:.6f} psnr {val:.4f} lr {lr:.6g}"


def train(model_cfg: SwinIRConfig, train_cfg: TrainConfig,
          dataset: PairDataset,
          val_pairs: Sequence[Tuple[ImageBuffer, ImageBuffer]],
          out_dir: Optional[str] = None,
          loss_cfg: Optional[LossConfig] = None,
          resume: Optional[str] = None,
          log: Optional[Callable[[str], None]] = None) -> TrainResult:
    """Optimize a model on synthesized pairs.

    Writes ``last.ckpt`` / ``best.ckpt`` / ``train_state.json`` and appends
    to ``metrics.log`` under ``out_dir`` when given. On divergence the
    most recent checkpoints are left in place and the result is flagged.
    """
    model_cfg.validate()
    loss_cfg = loss_cfg or loss_for_task(model_cfg.task)
    border = model_cfg.scale if model_cfg.task == "sr" else 0

    if resume:
        params, state = load_train_state(resume)
    else:
        params = init_params(model_cfg, seed=derive(train_cfg.seed, 0x1817))
        state = TrainState.fresh(params, derive(train_cfg.seed, 0x5EED))
    rng = SplitMix64(0)
    rng.state = state.rng_state

    result = TrainResult(params=params, state=state, best_psnr=state.best_psnr)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    def emit(line: str) -> None:
        result.metrics.append(line)
        if log:
            log(line)
        if out_dir:
            with open(os.path.join(out_dir, "metrics.log"), "a",
                      encoding="utf-8") as fh:
                fh.write(line + "\n")

    def save_all(best: bool) -> None:
        if not out_dir:
            return
        save_checkpoint(params, os.path.join(out_dir, "last.ckpt"))
        if best:
            save_checkpoint(params, os.path.join(out_dir, "best.ckpt"))
        state.rng_state = rng.state
        save_train_state(params, state, os.path.join(out_dir, "train_state.json"))

    def validate(step: int, loss_val: float, lr: float) -> None:
        val = validation_psnr(params, val_pairs, border) if val_pairs else float("nan")
        best = val > result.best_psnr
        if best:
            result.best_psnr = val
            state.best_psnr = val
        emit(_metrics_line(step, loss_val, val, lr))
        save_all(best)

    if train_cfg.iterations == 0:
        save_all(best=False)
        return result

    last_loss = math.nan
    start = state.step
    for step in range(start, train_cfg.iterations):
        lq, hq = dataset.sample_batch(train_cfg, rng, step)
        pred = forward(params, Tensor(lq))
        loss = compute_loss(loss_cfg, pred, Tensor(hq))
        last_loss = loss.item()
        if not math.isfinite(last_loss):
            result.diverged = True
            emit(f"step {step} loss nan ABORT")
            return result
        params.zero_grad()
        loss.backward()
        lr = lr_at(train_cfg, step)
        try:
            adam_step(params, state, lr, train_cfg)
        except TrainingDiverged as exc:
            result.diverged = True
            emit(f"step {step} {exc} ABORT")
            return result
        result.losses.append(last_loss)
        if (step + 1) % train_cfg.val_period == 0 or step + 1 == train_cfg.iterations:
            validate(step + 1, last_loss, lr)

    return result


# -- train-state persistence (sidecar, not the public checkpoint format) ---


def save_train_state(params: ModelParams, state: TrainState, path: str) -> None:
    def pack(d: Dict[str, np.ndarray]) -> Dict[str, str]:
        return {k: base64.b64encode(v.astype("<f4").tobytes()).decode("ascii")
                for k, v in d.items()}

    shapes = {n: list(t.shape) for n, t in params.named()}
    doc = {"step": state.step, "rng_state": f"{state.rng_state:016x}",
           "best_psnr": state.best_psnr, "shapes": shapes,
           "m": pack(state.m), "v": pack(state.v)}
    ckpt_path = path + ".params"
    save_checkpoint(params, ckpt_path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_train_state(path: str) -> Tuple[ModelParams, TrainState]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    params = load_checkpoint(path + ".params")

    def unpack(d: Dict[str, str]) -> Dict[str, np.ndarray]:
        return {k: np.frombuffer(base64.b64decode(v), dtype="<f4")
                  .reshape(doc["shapes"][k]).astype(np.float32)
                for k, v in d.items()}

    state = TrainState(m=unpack(doc["m"]), v=unpack(doc["v"]),
                       step=int(doc["step"]),
                       rng_state=int(doc["rng_state"], 16),
                       best_psnr=float(doc["best_psnr"]))
    return params, state


# -- gradient checking ------------------------------------------------------


@dataclass
class GradcheckReport:
    tolerance: float
    groups: Dict[str, float]        # parameter name -> max relative error
    losses: Tuple[str, ...] = ("l1", "charbonnier")

    @property
    def max_error(self) -> float:
        return max(self.groups.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> List[str]:
        width = max(len(n) for n in self.groups)
        out = [f"{name:<{width}}  {err:.3e}  "
               f"{'ok' if err < self.tolerance else 'FAIL'}"
               for name, err in self.groups.items()]
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"max relative error {self.max_error:.3e} "
                   f"(tolerance {self.tolerance:g}) {verdict}")
        return out


def _rel_err(a: np.ndarray, n: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return np.abs(a - n) / scale


def gradcheck(model_cfg: SwinIRConfig, tolerance: float = 1e-4,
              seed: int = 0, image_size: int = 8,
              step: float = 1e-4,
              losses: Tuple[str, ...] = ("l1", "charbonnier")) -> GradcheckReport:
    """Full-model analytic gradients vs central finite differences.

    Runs in the float64 shadow mode, parameter by parameter, and reports
    the max relative error (with unit floor) per named parameter over the
    requested losses. The L1 target is offset away from the prediction so
    no difference sits near the non-differentiable tie.
    """
    model_cfg.validate()
    rng = SplitMix64(derive(seed, 0x6C))
    params = init_params(model_cfg, seed=derive(seed, 0x1817), dtype=np.float64)
    h = w = image_size
    x = Tensor(rng.uniform(model_cfg.in_channels * h * w)
               .reshape(1, model_cfg.in_channels, h, w))
    out_h = h * (model_cfg.scale if model_cfg.task == "sr" else 1)
    target_base = rng.uniform(model_cfg.out_channels * out_h * out_h) \
        .reshape(1, model_cfg.out_channels, out_h, out_h)

    groups: Dict[str, float] = {}
    for loss_kind in losses:
        offset = 2.0 if loss_kind == "l1" else 0.0
        target = Tensor(target_base + offset)
        lcfg = LossConfig(kind=loss_kind)

        def loss_value() -> float:
            with no_grad():
                return compute_loss(lcfg, forward(params, x), target).item()

        params.zero_grad()
        compute_loss(lcfg, forward(params, x), target).backward()

        for name, t in params.named():
            analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
            numeric = np.empty_like(t.data)
            flat = t.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + step
                hi = loss_value()
                flat[i] = keep - step
                lo = loss_value()
                flat[i] = keep
                nflat[i] = (hi - lo) / (2.0 * step)
            err = float(_rel_err(analytic, numeric).max())
            groups[name] = max(groups.get(name, 0.0), err)
    return GradcheckReport(tolerance=tolerance, groups=groups, losses=losses)
