"""Proposal-based video-sentence matching network.

Both modalities are projected into a shared D-dimensional space, refined by
self-attention (padded clips masked out as references), pooled into
sliding-window proposal features, exchanged through cross-attention, fused
per proposal with the max-pooled sentence vector, passed through one more
self-attention unit over the fused rows, and scored by a sigmoid linear
classifier. The forward pass is built on the autodiff tape so the same code
serves evaluation and training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .segments import GridConfig, ProposalGrid, Segment, clips_to_seconds


@dataclass
class AttentionParams:
    """Weights of one attention unit at width ``dim``."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    dim: int


@dataclass
class ModelParams:
    """All learnable parameters of the matching network."""

    video_proj_w: np.ndarray  # D x D_v
    video_proj_b: np.ndarray
    query_proj_w: np.ndarray  # D x D_t
    query_proj_b: np.ndarray
    v2v: tuple  # self-attention stack over clips
    q2q: tuple  # self-attention stack over words
    q2v: tuple  # cross-attention: proposals attending words
    v2q: tuple  # cross-attention: words attending proposals
    fusion_w: np.ndarray  # D x 2D
    fusion_b: np.ndarray
    proposal_attn: AttentionParams  # self-attention over fused rows, width 3D
    classifier_w: np.ndarray  # 3D-vector
    classifier_b: np.ndarray  # scalar (0-d)
    d: int

    def named_arrays(self) -> dict:
        """Canonical name -> array view of every parameter tensor."""
        named = {
            "video_proj.w": self.video_proj_w,
            "video_proj.b": self.video_proj_b,
            "query_proj.w": self.query_proj_w,
            "query_proj.b": self.query_proj_b,
            "fusion.w": self.fusion_w,
            "fusion.b": self.fusion_b,
            "classifier.w": self.classifier_w,
            "classifier.b": self.classifier_b,
        }
        for stack_name, stack in (("v2v", self.v2v), ("q2q", self.q2q),
                                  ("q2v", self.q2v), ("v2q", self.v2q)):
            for i, unit in enumerate(stack):
                named.update(_attn_named(f"{stack_name}.{i}", unit))
        named.update(_attn_named("proposal_attn", self.proposal_attn))
        return named


def _attn_named(prefix: str, unit: AttentionParams) -> dict:
    return {
        f"{prefix}.w_q": unit.w_q,
        f"{prefix}.w_k": unit.w_k,
        f"{prefix}.w_v": unit.w_v,
        f"{prefix}.fc_w": unit.fc_w,
        f"{prefix}.fc_b": unit.fc_b,
    }


def _init_matrix(rng, rows, cols):
    bound = np.sqrt(1.0 / cols)  # fan-in scaling
    return rng.uniform(-bound, bound, size=(rows, cols))


def _init_attention(rng, dim) -> AttentionParams:
    return AttentionParams(
        w_q=_init_matrix(rng, dim, dim),
        w_k=_init_matrix(rng, dim, dim),
        w_v=_init_matrix(rng, dim, dim),
        fc_w=_init_matrix(rng, dim, dim),
        fc_b=np.zeros(dim),
        dim=dim,
    )


def init_params(d: int, d_v: int, d_t: int, depth_self: int, depth_cross: int, rng) -> ModelParams:
    """Fresh parameters: matrices uniform in +-sqrt(1/fan_in), zero biases.

    Draw order is fixed (projections, v2v, q2q, q2v, v2q, fusion, proposal
    attention, classifier) so a seeded generator reproduces the same model.
    """
    return ModelParams(
        video_proj_w=_init_matrix(rng, d, d_v),
        video_proj_b=np.zeros(d),
        query_proj_w=_init_matrix(rng, d, d_t),
        query_proj_b=np.zeros(d),
        v2v=tuple(_init_attention(rng, d) for _ in range(depth_self)),
        q2q=tuple(_init_attention(rng, d) for _ in range(depth_self)),
        q2v=tuple(_init_attention(rng, d) for _ in range(depth_cross)),
        v2q=tuple(_init_attention(rng, d) for _ in range(depth_cross)),
        fusion_w=_init_matrix(rng, d, 2 * d),
        fusion_b=np.zeros(d),
        proposal_attn=_init_attention(rng, 3 * d),
        classifier_w=_init_matrix(rng, 1, 3 * d)[0],
        classifier_b=np.zeros(()),
        d=d,
    )


class _LiftedAttention:
    __slots__ = ("w_q", "w_k", "w_v", "fc_w", "fc_b", "dim")

    def __init__(self, unit: AttentionParams, leaves: dict, prefix: str):
        self.w_q = ad.parameter(unit.w_q)
        self.w_k = ad.parameter(unit.w_k)
        self.w_v = ad.parameter(unit.w_v)
        self.fc_w = ad.parameter(unit.fc_w)
        self.fc_b = ad.parameter(unit.fc_b)
        self.dim = unit.dim
        leaves[f"{prefix}.w_q"] = self.w_q
        leaves[f"{prefix}.w_k"] = self.w_k
        leaves[f"{prefix}.w_v"] = self.w_v
        leaves[f"{prefix}.fc_w"] = self.fc_w
        leaves[f"{prefix}.fc_b"] = self.fc_b


class LiftedParams:
    """Tensor-leaved mirror of ModelParams for one backward pass."""

    __slots__ = ("video_proj_w", "video_proj_b", "query_proj_w", "query_proj_b",
                 "v2v", "q2q", "q2v", "v2q", "fusion_w", "fusion_b",
                 "proposal_attn", "classifier_w", "classifier_b", "d", "leaves")

    def __init__(self, params: ModelParams):
        leaves: dict = {}
        self.video_proj_w = ad.parameter(params.video_proj_w)
        self.video_proj_b = ad.parameter(params.video_proj_b)
        self.query_proj_w = ad.parameter(params.query_proj_w)
        self.query_proj_b = ad.parameter(params.query_proj_b)
        leaves["video_proj.w"] = self.video_proj_w
        leaves["video_proj.b"] = self.video_proj_b
        leaves["query_proj.w"] = self.query_proj_w
        leaves["query_proj.b"] = self.query_proj_b
        self.v2v = tuple(_LiftedAttention(u, leaves, f"v2v.{i}") for i, u in enumerate(params.v2v))
        self.q2q = tuple(_LiftedAttention(u, leaves, f"q2q.{i}") for i, u in enumerate(params.q2q))
        self.q2v = tuple(_LiftedAttention(u, leaves, f"q2v.{i}") for i, u in enumerate(params.q2v))
        self.v2q = tuple(_LiftedAttention(u, leaves, f"v2q.{i}") for i, u in enumerate(params.v2q))
        self.fusion_w = ad.parameter(params.fusion_w)
        self.fusion_b = ad.parameter(params.fusion_b)
        leaves["fusion.w"] = self.fusion_w
        leaves["fusion.b"] = self.fusion_b
        self.proposal_attn = _LiftedAttention(params.proposal_attn, leaves, "proposal_attn")
        self.classifier_w = ad.parameter(params.classifier_w)
        self.classifier_b = ad.parameter(params.classifier_b)
        leaves["classifier.w"] = self.classifier_w
        leaves["classifier.b"] = self.classifier_b
        self.d = params.d
        self.leaves = leaves


def lift(params: ModelParams) -> LiftedParams:
    return LiftedParams(params)


def _as_lifted(params) -> LiftedParams:
    return params if isinstance(params, LiftedParams) else LiftedParams(params)


@dataclass
class AttentionResult:
    """Output features plus the row-stochastic attention weight matrix."""

    output: np.ndarray  # L_t x D'
    weights: np.ndarray  # L_t x L_r


@dataclass
class MatchScores:
    """Per-proposal matching probabilities for one video-query pair."""

    scores: np.ndarray  # (L_s,), strictly inside (0, 1)
    grid: ProposalGrid
    tensor: Tensor | None = None


@dataclass
class LocalizeResult:
    segment: Segment
    seconds: tuple
    score: float
    proposal_index: int


def _attend(target: Tensor, reference: Tensor, unit, mask=None) -> tuple:
    """One attention unit on the tape; returns (output, weights) tensors.

    Logits are target . W_q^T . W_k . reference^T scaled by 1/sqrt(dim);
    masked reference columns get exactly zero weight; the output is
    FC(target + A . reference . W_v^T).
    """
    logits = ad.matmul(ad.matmul(ad.matmul(target, ad.transpose(unit.w_q)), unit.w_k),
                       ad.transpose(reference))
    weights = ad.softmax_rows(ad.scale(logits, 1.0 / np.sqrt(unit.dim)), mask)
    context = ad.matmul(weights, ad.matmul(reference, ad.transpose(unit.w_v)))
    out = ad.add(ad.matmul(ad.add(target, context), ad.transpose(unit.fc_w)), unit.fc_b)
    return out, weights


def attention_unit(target: np.ndarray, reference: np.ndarray, params: AttentionParams,
                   reference_mask=None) -> AttentionResult:
    """Attend ``target`` rows over ``reference`` rows (numpy in, numpy out)."""
    target = np.asarray(target, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if target.shape[1] != params.dim or reference.shape[1] != params.dim:
        raise ValueError(f"feature width must be {params.dim}")
    if reference_mask is not None and len(reference_mask) != reference.shape[0]:
        raise ValueError("mask length must match reference rows")
    lifted = _LiftedAttention(params, {}, "_")
    out, weights = _attend(ad.constant(target), ad.constant(reference), lifted, reference_mask)
    return AttentionResult(out.value, weights.value)


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, ad.transpose(w)), b)


def _clips_of(video):
    return video.clips if hasattr(video, "clips") else video


def _tokens_of(query):
    return query.tokens if hasattr(query, "tokens") else query


def _encode_t(clips, query_tokens, p: LiftedParams, grid: ProposalGrid):
    """Tape-level pipeline up to cross-attended proposal and word features."""
    mask = None
    if clips.valid_count < clips.l_c:
        mask = np.arange(clips.l_c) < clips.valid_count
    v = _affine(ad.constant(clips.matrix), p.video_proj_w, p.video_proj_b)
    for unit in p.v2v:
        v, _ = _attend(v, v, unit, mask)
    q = _affine(ad.constant(query_tokens.matrix), p.query_proj_w, p.query_proj_b)
    for unit in p.q2q:
        q, _ = _attend(q, q, unit)
    props = ad.segment_max(v, [(s.start, s.end) for s in grid.segments])
    # Cross-attention updates both sides simultaneously from the pre-update
    # features, one layer at a time.
    for qv_unit, vq_unit in zip(p.q2v, p.v2q):
        new_props, _ = _attend(props, q, qv_unit)
        new_q, _ = _attend(q, props, vq_unit)
        props, q = new_props, new_q
    return props, q


def encode(video, query, params, grid_config: GridConfig):
    """Run the encoder; returns (proposal_feats L_s x D, word_feats L_w x D)."""
    clips = _clips_of(video)
    tokens = _tokens_of(query)
    grid = grid_config.grid_for(clips.l_c)
    props, q = _encode_t(clips, tokens, _as_lifted(params), grid)
    return props.value, q.value


def pool_sentence(word_feats: np.ndarray) -> np.ndarray:
    """Column-wise max over word rows: the sentence vector."""
    word_feats = np.asarray(word_feats)
    if word_feats.ndim != 2 or word_feats.shape[0] < 1:
        raise ValueError("need at least one word row")
    return word_feats.max(axis=0)


def _fuse_rows_t(props: Tensor, sent: Tensor, p: LiftedParams, n_rows: int, d: int) -> Tensor:
    """Per-proposal fusion with the sentence vector: (S+Q) || S*Q || FC(S||Q)."""
    q_row = ad.reshape(sent, (1, d))
    q_mat = ad.add(ad.constant(np.zeros((n_rows, 1))), q_row)
    both = ad.concat_cols([props, q_mat])
    return ad.concat_cols([
        ad.add(props, q_mat),
        ad.mul(props, q_mat),
        _affine(both, p.fusion_w, p.fusion_b),
    ])


def fuse(s_vec: np.ndarray, q_vec: np.ndarray, params) -> np.ndarray:
    """Fuse one proposal vector with one sentence vector into a 3D-vector."""
    p = _as_lifted(params)
    s = np.asarray(s_vec, dtype=np.float64)
    q = np.asarray(q_vec, dtype=np.float64)
    if s.shape != q.shape or s.ndim != 1:
        raise ValueError("fuse expects two equal-length vectors")
    fused = _fuse_rows_t(ad.constant(s[None, :]), ad.constant(q), p, 1, s.shape[0])
    return fused.value[0]


def _score_t(fused: Tensor, p: LiftedParams) -> Tensor:
    att, _ = _attend(fused, fused, p.proposal_attn)
    logits = ad.add(ad.matvec(att, p.classifier_w), p.classifier_b)
    return ad.sigmoid(logits)


def score_proposals(fused: np.ndarray, params, grid: ProposalGrid | None = None) -> MatchScores:
    """Self-attend the fused rows, then apply the sigmoid linear classifier."""
    p = _as_lifted(params)
    scores = _score_t(ad.constant(np.asarray(fused, dtype=np.float64)), p)
    return MatchScores(scores.value.copy(), grid, scores)


def _match_t(video, query, p: LiftedParams, grid_config: GridConfig) -> MatchScores:
    clips = _clips_of(video)
    tokens = _tokens_of(query)
    grid = grid_config.grid_for(clips.l_c)
    props, q = _encode_t(clips, tokens, p, grid)
    sent = ad.max_rows(q)
    fused = _fuse_rows_t(props, sent, p, len(grid), p.d)
    scores = _score_t(fused, p)
    return MatchScores(scores.value.copy(), grid, scores)


def match(video, query, params, grid_config: GridConfig) -> MatchScores:
    """Proposal-query matching scores for one video-query pair."""
    return _match_t(video, query, _as_lifted(params), grid_config)


def localize(video, query, params, grid_config: GridConfig) -> LocalizeResult:
    """Top-scoring proposal; ties go to earlier start, then shorter length."""
    ms = match(video, query, params, grid_config)
    best = ms.scores.max()
    candidates = np.flatnonzero(ms.scores == best)
    idx = min(candidates, key=lambda i: (ms.grid.starts[i], ms.grid.ends[i] - ms.grid.starts[i]))
    seg = ms.grid.segments[idx]
    seconds = clips_to_seconds(seg, video.duration, _clips_of(video).l_c)
    return LocalizeResult(seg, seconds, float(ms.scores[idx]), int(idx))
