"""End-to-end training: sampling, optimisation, checkpointing, verification.

Everything is driven by a single seeded generator in a fixed draw order
(parameter init first, then batches), so a (corpus, config, seed) triple
maps to a bit-identical checkpoint and metrics log. Ground-truth boundaries
are never read here; the audit counter on ``Sentence.gt_segment`` stays
untouched by ``train``.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DataError, MomentlocError, TrainingDivergedError
from .losses import BatchItem, LossConfig, NegativeSample, total_loss
from .network import AttentionParams, ModelParams, init_params, lift
from .segments import GridConfig

_CHECKPOINT_MAGIC = b"CRMC"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation and model-shape settings.

    Defaults follow the reference setup: shared dimension 256, one attention
    unit per stack, batches of 64 videos, 50 epochs of Adam at 1e-4,
    tau = 0.5 and a 40-token cap for concatenated queries.
    """

    d: int = 256
    depth_self: int = 1
    depth_cross: int = 1
    grid: GridConfig = field(default_factory=GridConfig)
    batch_videos: int = 64
    epochs: int = 50
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    tau: float = 0.5
    max_concat_len: int = 40
    grad_clip: float = 0.0  # 0 disables clipping
    seed: int = 0
    use_bce: bool = True
    use_tmp: bool = True
    use_smt: bool = True

    def __post_init__(self):
        if self.batch_videos < 2:
            raise MomentlocError("batch_videos must be >= 2 (negative sampling)")
        if self.learning_rate <= 0:
            raise MomentlocError("learning rate must be positive")

    def loss_config(self) -> LossConfig:
        return LossConfig(self.grid, self.tau, self.use_bce, self.use_tmp,
                          self.use_smt, self.max_concat_len)


def sample_batch(corpus, n: int, rng) -> list:
    """Draw n videos, one query pair each, plus contrastive negatives.

    Videos are uniform without replacement (with replacement if the corpus
    is smaller than n). Each multi-sentence video yields an ordered sentence
    pair uniform over the distinct position pairs; single-sentence videos
    yield a solitary BCE-only query. Every query gets one negative video and
    one negative query, both uniform over the other batch videos.
    """
    records = list(corpus)
    if len(records) < 2:
        raise DataError("need at least 2 videos to sample a batch")
    idx = rng.choice(len(records), size=n, replace=len(records) < n)
    chosen = [records[int(i)] for i in idx]

    def other_video(self_id):
        for _ in range(10000):
            cand = chosen[int(rng.integers(n))]
            if cand.id != self_id:
                return cand
        raise DataError("cannot draw a negative: batch collapsed to one video")

    def negative_for(video):
        neg_video = other_video(video.id)
        source = other_video(video.id)
        neg_query = source.paragraph[int(rng.integers(len(source.paragraph)))]
        return NegativeSample(neg_video, neg_query)

    batch = []
    for video in chosen:
        l_q = len(video.paragraph)
        if l_q == 1:
            batch.append(BatchItem(video, video.paragraph[0], negative_for(video)))
            continue
        pairs = [(a, b) for a in range(l_q) for b in range(a + 1, l_q)]
        a, b = pairs[int(rng.integers(len(pairs)))]
        batch.append(BatchItem(video, video.paragraph[a], negative_for(video),
                               video.paragraph[b], negative_for(video)))
    return batch


class Adam:
    """Adaptive-moment gradient descent over a named array dict."""

    def __init__(self, named: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in named.items()}
        self.v = {k: np.zeros_like(v) for k, v in named.items()}

    def step(self, named: dict, grads: dict):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in sorted(named):
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(named[name])
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            named[name] -= self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)


def _clip_grads(grads: dict, max_norm: float):
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values() if g is not None))
    if total > max_norm > 0:
        scale = max_norm / total
        for name, g in grads.items():
            if g is not None:
                grads[name] = g * scale


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    bce: float
    tmp: float
    smt: float


@dataclass
class Checkpoint:
    """Trained parameters plus everything needed to reproduce and audit them."""

    params: ModelParams
    config: dict
    epoch: int
    rng_digest: str
    metrics_csv: str
    order_consistency: list


def _config_snapshot(cfg: TrainConfig, d_v: int, d_t: int, l_c: int) -> dict:
    return {
        "d": cfg.d, "d_v": d_v, "d_t": d_t, "l_c": l_c,
        "depth_self": cfg.depth_self, "depth_cross": cfg.depth_cross,
        "window_sizes": list(cfg.grid.window_sizes), "stride": cfg.grid.stride,
        "batch_videos": cfg.batch_videos, "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate, "beta1": cfg.beta1, "beta2": cfg.beta2,
        "adam_eps": cfg.adam_eps, "tau": cfg.tau, "max_concat_len": cfg.max_concat_len,
        "grad_clip": cfg.grad_clip, "seed": cfg.seed,
        "use_bce": cfg.use_bce, "use_tmp": cfg.use_tmp, "use_smt": cfg.use_smt,
    }


def grid_from_snapshot(config: dict) -> GridConfig:
    return GridConfig(tuple(config["window_sizes"]), config["stride"])


def _rng_digest(rng) -> str:
    state = json.dumps(rng.bit_generator.state, sort_keys=True)
    return hashlib.sha256(state.encode()).hexdigest()


def metrics_to_csv(rows) -> str:
    lines = ["epoch,loss,bce,tmp,smt"]
    for r in rows:
        lines.append(f"{r.epoch},{r.loss!r},{r.bce!r},{r.tmp!r},{r.smt!r}")
    return "\n".join(lines) + "\n"


def train(corpus, config: TrainConfig, extra_config: dict | None = None) -> Checkpoint:
    """Run the full optimisation loop over the given records.

    Each epoch draws ceil(len(corpus) / batch_videos) independent batches;
    every batch does one forward/backward/Adam step. A non-finite loss
    aborts with the offending batch named. ``extra_config`` entries (for
    example the clip-building parameters of the data pipeline) are merged
    into the checkpoint's config snapshot so evaluation can reload
    compatible data.
    """
    records = list(corpus)
    if not records:
        raise DataError("empty corpus")
    d_v = records[0].clips.matrix.shape[1]
    d_t = records[0].paragraph[0].tokens.matrix.shape[1]
    l_c = records[0].clips.l_c
    rng = np.random.default_rng(config.seed)
    params = init_params(config.d, d_v, d_t, config.depth_self, config.depth_cross, rng)
    named = params.named_arrays()
    adam = Adam(named, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    loss_cfg = config.loss_config()
    batches_per_epoch = math.ceil(len(records) / config.batch_videos)

    metrics = []
    order_series = []
    for epoch in range(config.epochs):
        sums = np.zeros(4)
        flags = []
        for b in range(batches_per_epoch):
            batch = sample_batch(records, config.batch_videos, rng)
            lifted = lift(params)
            breakdown = total_loss(batch, lifted, loss_cfg)
            value = float(breakdown.total)
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, b, [it.video.id for it in batch])
            ad.backward(breakdown.total)
            grads = {name: leaf.grad for name, leaf in lifted.leaves.items()}
            if config.grad_clip > 0:
                _clip_grads(grads, config.grad_clip)
            adam.step(named, grads)
            sums += (value, breakdown.bce, breakdown.tmp, breakdown.smt)
            if breakdown.order_consistent_fraction is not None:
                flags.append(breakdown.order_consistent_fraction)
        means = [float(x) for x in sums / batches_per_epoch]
        metrics.append(EpochMetrics(epoch, *means))
        order_series.append(sum(flags) / len(flags) if flags else None)

    params32 = _cast_params(params, np.float32)
    snapshot = _config_snapshot(config, d_v, d_t, l_c)
    if extra_config:
        snapshot.update(extra_config)
    return Checkpoint(
        params=params32,
        config=snapshot,
        epoch=config.epochs,
        rng_digest=_rng_digest(rng),
        metrics_csv=metrics_to_csv(metrics),
        order_consistency=order_series,
    )


def _cast_params(params: ModelParams, dtype) -> ModelParams:
    named = {k: v.astype(dtype) for k, v in params.named_arrays().items()}
    return params_from_named(named, params.d, len(params.v2v), len(params.q2v))


def params_from_named(named: dict, d: int, depth_self: int, depth_cross: int) -> ModelParams:
    """Rebuild a ModelParams from its canonical name -> array dict."""

    def attn(prefix, dim):
        return AttentionParams(
            w_q=named[f"{prefix}.w_q"], w_k=named[f"{prefix}.w_k"],
            w_v=named[f"{prefix}.w_v"], fc_w=named[f"{prefix}.fc_w"],
            fc_b=named[f"{prefix}.fc_b"], dim=dim,
        )

    try:
        return ModelParams(
            video_proj_w=named["video_proj.w"], video_proj_b=named["video_proj.b"],
            query_proj_w=named["query_proj.w"], query_proj_b=named["query_proj.b"],
            v2v=tuple(attn(f"v2v.{i}", d) for i in range(depth_self)),
            q2q=tuple(attn(f"q2q.{i}", d) for i in range(depth_self)),
            q2v=tuple(attn(f"q2v.{i}", d) for i in range(depth_cross)),
            v2q=tuple(attn(f"v2q.{i}", d) for i in range(depth_cross)),
            fusion_w=named["fusion.w"], fusion_b=named["fusion.b"],
            proposal_attn=attn("proposal_attn", 3 * d),
            classifier_w=named["classifier.w"], classifier_b=named["classifier.b"],
            d=d,
        )
    except KeyError as exc:
        raise DataError(f"parameter tensor {exc.args[0]!r} missing") from None


def save_checkpoint(ckpt: Checkpoint, path):
    """Versioned container: JSON manifest + named float32 tensors."""
    named = ckpt.params.named_arrays()
    manifest = {
        "format_version": _CHECKPOINT_VERSION,
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "rng_digest": ckpt.rng_digest,
        "metrics_csv": ckpt.metrics_csv,
        "order_consistency": ckpt.order_consistency,
        "tensors": [{"name": k, "shape": list(named[k].shape)} for k in sorted(named)],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(bytes([_CHECKPOINT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in sorted(named):
            fh.write(np.ascontiguousarray(named[name], dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    if blob[4] != _CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {blob[4]}")
    (mlen,) = struct.unpack("<I", blob[5:9])
    manifest = json.loads(blob[9 : 9 + mlen].decode())
    config = manifest["config"]
    offset = 9 + mlen
    named = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", offset=offset, count=count)
        named[entry["name"]] = arr.reshape(shape).copy()
        offset += 4 * count
    if offset != len(blob):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    params = params_from_named(named, config["d"], config["depth_self"], config["depth_cross"])
    return Checkpoint(params, config, manifest["epoch"], manifest["rng_digest"],
                      manifest["metrics_csv"], manifest["order_consistency"])


def default_gradient_check(seed=0, *, use_bce=True, use_tmp=True, use_smt=True,
                           num_coords=240) -> "GradCheckReport":
    """Gradient check on a fixed tiny instance (D=8, 16 clips, 3 proposals)."""
    from .synthetic import SynthConfig, generate_corpus

    synth = generate_corpus(SynthConfig(
        num_videos=4, l_c=16, d_v=8, d_t=8, num_event_types=3,
        events_min=2, events_max=2, event_lengths=(4, 6),
        ambiguity_rate=0.25, noise_std=0.1, tokens_per_sentence=(2, 3), seed=seed,
    ))
    rng = np.random.default_rng(seed)
    params = init_params(8, 8, 8, 1, 1, rng)
    batch = sample_batch(synth.records[:2], 2, rng)
    cfg = LossConfig(GridConfig((8, 16), 8), 0.5, use_bce, use_tmp, use_smt, 40)
    return gradient_check(batch, params, cfg, num_coords=num_coords, seed=seed)


@dataclass
class GradCheckReport:
    """Analytic-vs-finite-difference comparison over sampled coordinates."""

    max_rel_error: float
    num_coords: int
    tolerance: float
    offenders: list  # (tensor name, flat index, analytic, fd, rel error)

    def __float__(self):
        return self.max_rel_error


def gradient_check(batch, params: ModelParams, loss_cfg: LossConfig, *, step=1e-4,
                   num_coords=240, tolerance=1e-3, seed=0) -> GradCheckReport:
    """Compare analytic gradients of the batch objective against central
    finite differences on a seeded sample of parameter coordinates.

    The relative error denominator is floored at 1e-4: coordinates whose
    gradient is smaller than the optimiser step are compared absolutely.
    """
    lifted = lift(params)
    breakdown = total_loss(batch, lifted, loss_cfg)
    ad.backward(breakdown.total)
    analytic = {name: leaf.grad for name, leaf in lifted.leaves.items()}

    named = params.named_arrays()
    names = sorted(named)
    sizes = [named[n].size for n in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    take = min(num_coords, total)
    flat_choice = np.sort(rng.choice(total, size=take, replace=False))

    def loss_value() -> float:
        return float(total_loss(batch, lift(params), loss_cfg).total)

    bounds = np.cumsum([0] + sizes)
    max_rel = 0.0
    offenders = []
    for flat in flat_choice:
        tensor_i = int(np.searchsorted(bounds, flat, side="right") - 1)
        name = names[tensor_i]
        idx = int(flat - bounds[tensor_i])
        arr = named[name]
        orig = arr.flat[idx]
        arr.flat[idx] = orig + step
        f_plus = loss_value()
        arr.flat[idx] = orig - step
        f_minus = loss_value()
        arr.flat[idx] = orig
        fd = (f_plus - f_minus) / (2.0 * step)
        a = 0.0 if analytic[name] is None else float(analytic[name].flat[idx])
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
        if rel > max_rel:
            max_rel = rel
        if rel >= tolerance:
            offenders.append((name, idx, a, fd, rel))
    return GradCheckReport(max_rel, take, tolerance, offenders)
