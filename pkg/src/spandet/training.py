"""Training: composite detection objective, denoising queries, optimizer.

The objective is a weighted sum of span L1, gIoU, and focal terms over the
learnable queries (matched to targets by Hungarian assignment) plus L1/gIoU
reconstruction terms over the denoising queries, repeated for every decoder
layer's auxiliary outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .geometry import Interval, clamp_interval, giou_1d_t, span_l1_t, span_to_cw
from .matching import build_match_cost, hungarian
from .model import (ClassifierHead, DetectionModel, LayerPrediction,
                    ModelConfig, ModelOutput, save_detector)
from .textproc import append_mean_cls


class NumericalError(RuntimeError):
    """Loss or gradients left the realm of finite numbers."""


@dataclass(frozen=True)
class LossWeights:
    span: float = 10.0
    giou: float = 1.0
    focal: float = 4.0
    dn_span: float = 9.0
    dn_giou: float = 3.0

    def __post_init__(self):
        if min(self.span, self.giou, self.focal, self.dn_span, self.dn_giou) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class DenoisingBatch:
    anchors: np.ndarray    # (D, 2) noised (c, w), all valid intervals
    gt_index: np.ndarray   # (D,) originating GT index
    n_groups: int


def make_denoising(gts: list[Interval], cfg: ModelConfig,
                   rng: np.random.Generator) -> DenoisingBatch | None:
    """Noised copies of the targets: center jittered by a fraction of the
    width, width rescaled multiplicatively, then clamped back to validity."""
    if not gts or cfg.dn_groups == 0:
        return None
    anchors = []
    gt_index = []
    for _ in range(cfg.dn_groups):
        for j, gt in enumerate(gts):
            u = rng.uniform(-cfg.dn_center_noise, cfg.dn_center_noise)
            v = rng.uniform(-cfg.dn_width_noise, cfg.dn_width_noise)
            noisy = clamp_interval(gt.c + u * gt.w, gt.w * (1.0 + v))
            anchors.append([noisy.c, noisy.w])
            gt_index.append(j)
    return DenoisingBatch(np.array(anchors), np.array(gt_index, dtype=int),
                          cfg.dn_groups)


def _focal_core(logits: T.Tensor, targets: np.ndarray,
                alpha: float, gamma: float) -> T.Tensor:
    """Per-element focal loss -alpha_t (1-p_t)^gamma log(p_t)."""
    p = T.sigmoid(logits)
    tg = targets
    pt = p * tg + (1.0 - p) * (1.0 - tg)
    at = T.Tensor(alpha * tg + (1.0 - alpha) * (1.0 - tg))
    return T.scale(at * T.powc(1.0 - pt, gamma) * T.log(pt), -1.0)


def focal_loss(logit, target: int, alpha: float = 0.25, gamma: float = 2.0):
    """Binary focal loss on one logit; returns a Tensor for Tensor input,
    a float otherwise. Reduces to weighted cross-entropy at gamma=0."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha {alpha} outside (0, 1)")
    if gamma < 0.0:
        raise ValueError(f"gamma {gamma} must be >= 0")
    as_tensor = isinstance(logit, T.Tensor)
    lt = logit if as_tensor else T.Tensor(float(logit))
    out = _focal_core(lt, np.asarray(float(target)), alpha, gamma)
    return out if as_tensor else float(out.data)


def focal_loss_mean(logits: T.Tensor, targets: np.ndarray,
                    alpha: float = 0.25, gamma: float = 2.0) -> T.Tensor:
    return T.mean(_focal_core(logits, np.asarray(targets, dtype=np.float64),
                              alpha, gamma))


def composite_loss(layer: LayerPrediction, dn_cw: T.Tensor | None,
                   dn_gt_index: np.ndarray | None, gts: list[Interval],
                   weights: LossWeights = LossWeights(),
                   alpha: float = 0.25, gamma: float = 2.0,
                   ) -> tuple[T.Tensor, dict[str, float]]:
    """One decoder layer's weighted objective plus a per-term breakdown.

    Matching runs over the learnable queries only; denoising queries are
    paired with their originating targets by construction.
    """
    cw, logits = layer.cw, layer.logits
    n_queries = cw.shape[0]
    probs = 1.0 / (1.0 + np.exp(-logits.data))
    pred_ivs = [(Interval(float(c), float(w)), float(p))
                for (c, w), p in zip(cw.data, probs)]
    if gts:
        cost = build_match_cost(pred_ivs, gts,
                                (weights.span, weights.giou, weights.focal))
        pairs = hungarian(cost)
        gt_cw = np.array([[g.c, g.w] for g in gts])
        span_terms, giou_terms = [], []
        for i, j in pairs:
            target = T.Tensor(gt_cw[j])
            span_terms.append(span_l1_t(cw[i, :], target))
            giou_terms.append(1.0 - giou_1d_t(cw[i, :], target))
        l_span = T.scale(_tsum(span_terms), 1.0 / len(pairs))
        l_giou = T.scale(_tsum(giou_terms), 1.0 / len(pairs))
    else:
        pairs = []
        l_span = T.Tensor(0.0)
        l_giou = T.Tensor(0.0)

    targets = np.zeros(n_queries)
    for i, _ in pairs:
        targets[i] = 1.0
    l_focal = focal_loss_mean(logits, targets, alpha, gamma)

    if dn_cw is not None and len(dn_cw.data):
        gt_cw = np.array([[g.c, g.w] for g in gts])
        dn_span_terms, dn_giou_terms = [], []
        for q in range(dn_cw.shape[0]):
            target = T.Tensor(gt_cw[dn_gt_index[q]])
            dn_span_terms.append(span_l1_t(dn_cw[q, :], target))
            dn_giou_terms.append(1.0 - giou_1d_t(dn_cw[q, :], target))
        l_dn_span = T.scale(_tsum(dn_span_terms), 1.0 / len(dn_span_terms))
        l_dn_giou = T.scale(_tsum(dn_giou_terms), 1.0 / len(dn_giou_terms))
    else:
        l_dn_span = T.Tensor(0.0)
        l_dn_giou = T.Tensor(0.0)

    total = (T.scale(l_span, weights.span) + T.scale(l_giou, weights.giou)
             + T.scale(l_focal, weights.focal)
             + T.scale(l_dn_span, weights.dn_span)
             + T.scale(l_dn_giou, weights.dn_giou))
    breakdown = {"span": float(l_span.data), "giou": float(l_giou.data),
                 "focal": float(l_focal.data), "dn_span": float(l_dn_span.data),
                 "dn_giou": float(l_dn_giou.data), "total": float(total.data)}
    return total, breakdown


def _tsum(terms: list[T.Tensor]) -> T.Tensor:
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def detection_loss(out: ModelOutput, gts: list[Interval],
                   weights: LossWeights = LossWeights(),
                   alpha: float = 0.25, gamma: float = 2.0,
                   ) -> tuple[T.Tensor, dict[str, float]]:
    """Sum of the composite objective over the final and auxiliary layers."""
    total = None
    agg: dict[str, float] = {}
    for li, layer in enumerate(out.layers):
        dn_cw = out.dn_layers[li] if out.dn_layers else None
        t, terms = composite_loss(layer, dn_cw, out.dn_gt_index, gts,
                                  weights, alpha, gamma)
        total = t if total is None else total + t
        for k, v in terms.items():
            agg[k] = agg.get(k, 0.0) + v
    return total, agg


# -- optimizer and schedule ---------------------------------------------------


class AdamW:
    """Adam with decoupled weight decay and bias correction."""

    def __init__(self, params: dict[str, T.Tensor], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.t += 1
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if self.weight_decay:
                p.data *= 1.0 - lr * self.weight_decay
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p.data -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def clip_grad_norm(params: dict[str, T.Tensor], max_norm: float) -> float:
    total = math.sqrt(sum(float((p.grad * p.grad).sum())
                          for p in params.values() if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def cosine_lr(step: int, total_steps: int, base_lr: float,
              warmup_steps: int = 0) -> float:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    span = total_steps - warmup_steps
    progress = (step - warmup_steps) / span if span > 0 else 1.0
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


# -- training loop ------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 75
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 1e-4
    warmup_frac: float = 0.05
    grad_clip: float = 0.1
    seed: int = 0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0


@dataclass
class TrainResult:
    model: DetectionModel
    log: list[dict]
    best_epoch: int
    best_val: float


Provider = Callable[[object], tuple[np.ndarray, np.ndarray]]
"""Maps an annotated sample to (embedding matrix, normalized token midpoints)."""


def _prepare(samples, provider) -> dict:
    cache = {}
    for s in samples:
        vec, pos = provider(s)
        gts = [span_to_cw(sp, len(s.text)) for sp in s.intervals]
        cache[s.id] = (vec, pos, gts)
    return cache


def train(split, provider: Provider, model_cfg: ModelConfig,
          train_cfg: TrainConfig = TrainConfig(),
          weights: LossWeights = LossWeights(),
          run_dir=None) -> TrainResult:
    """Train a detector; deterministic for a fixed seed (single-threaded).

    Logs one record per epoch; when `run_dir` is given, writes a config
    snapshot, a metrics log, and best/last checkpoints there.
    """
    if not split.train:
        raise ValueError("training split is empty")
    model = DetectionModel(model_cfg, seed=train_cfg.seed)
    params = model.parameters()
    opt = AdamW(params, lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    rng = np.random.default_rng(train_cfg.seed)

    cache = _prepare(split.train, provider)
    val_cache = _prepare(split.val, provider) if split.val else {}

    n = len(split.train)
    batches_per_epoch = math.ceil(n / train_cfg.batch_size)
    total_steps = train_cfg.epochs * batches_per_epoch
    warmup = round(train_cfg.warmup_frac * total_steps)

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        snapshot = {"model": asdict(model_cfg), "train": asdict(train_cfg),
                    "weights": asdict(weights)}
        (run_dir / "config.json").write_text(
            json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
        log_path = run_dir / "metrics.jsonl"
        log_path.write_text("")

    log: list[dict] = []
    best_val = math.inf
    best_epoch = -1
    best_state = model.state()
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n)
        term_sums: dict[str, float] = {}
        lr = train_cfg.lr
        for b in range(batches_per_epoch):
            idxs = order[b * train_cfg.batch_size:(b + 1) * train_cfg.batch_size]
            model.zero_grad()
            for idx in idxs:
                s = split.train[idx]
                vec, pos, gts = cache[s.id]
                dnb = make_denoising(gts, model_cfg, rng)
                out = model.forward(vec, pos, dnb)
                loss, terms = detection_loss(out, gts, weights,
                                             train_cfg.focal_alpha,
                                             train_cfg.focal_gamma)
                if not math.isfinite(float(loss.data)):
                    raise NumericalError(f"non-finite loss at epoch {epoch}")
                loss.backward()
                for k, v in terms.items():
                    term_sums[k] = term_sums.get(k, 0.0) + v
            inv = 1.0 / len(idxs)
            for p in params.values():
                if p.grad is not None:
                    p.grad = p.grad * inv
            clip_grad_norm(params, train_cfg.grad_clip)
            step += 1
            lr = cosine_lr(step, total_steps, train_cfg.lr, warmup)
            opt.step(lr)

        record = {"epoch": epoch, "lr": lr,
                  "train": {k: v / n for k, v in term_sums.items()}}
        if val_cache:
            v_sum = 0.0
            for s in split.val:
                vec, pos, gts = val_cache[s.id]
                out = model.forward(vec, pos, None)
                loss, _ = detection_loss(out, gts, weights,
                                         train_cfg.focal_alpha,
                                         train_cfg.focal_gamma)
                v_sum += float(loss.data)
            record["val_loss"] = v_sum / len(split.val)
            if record["val_loss"] < best_val:
                best_val = record["val_loss"]
                best_epoch = epoch
                best_state = model.state()
        log.append(record)
        if run_dir is not None:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            save_detector(run_dir / "last.npz", model)

    if best_epoch < 0:  # no validation split: keep the final weights
        best_epoch = train_cfg.epochs
        best_val = math.nan
        best_state = model.state()
    model.load_state(best_state)
    if run_dir is not None:
        save_detector(run_dir / "best.npz", model)
    return TrainResult(model, log, best_epoch, best_val)


def train_classifier(samples, labels: list[int], provider: Provider,
                     hidden: int = 32, n_classes: int = 2, epochs: int = 30,
                     batch_size: int = 16, lr: float = 1e-3,
                     weight_decay: float = 1e-4, seed: int = 0,
                     append_cls: bool = True) -> ClassifierHead:
    """Fit the two-layer CLS head with cross-entropy; the CLS row is the last
    embedding row (appended by mean pooling for providers without one)."""
    if not samples:
        raise ValueError("no training samples")
    feats = []
    for s in samples:
        vec, _ = provider(s)
        feats.append(append_mean_cls(vec) if append_cls else vec)
    d_model = feats[0].shape[1]
    head = ClassifierHead(d_model, hidden, n_classes, seed=seed)
    opt = AdamW(head.parameters(), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    y = np.asarray(labels, dtype=int)
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        for b in range(0, len(order), batch_size):
            idxs = order[b:b + batch_size]
            head.zero_grad()
            for i in idxs:
                probs = T.softmax(head.logits(feats[i]))
                loss = T.scale(T.log(probs[int(y[i])]), -1.0)
                loss.backward()
            for p in head.parameters().values():
                if p.grad is not None:
                    p.grad = p.grad / len(idxs)
            opt.step()
    return head
