"""Metrics over a trained checkpoint: recall at IoU and the two pairwise
consistency protocols.

Recall treats a query as correct when the top-1 prediction's IoU with
ground truth is strictly greater than the threshold. Temporal consistency
asks, over all sentence pairs in a video, whether the predicted segments
are ordered like the ground-truth segments. Semantic consistency localises
the concatenated sentence pair and asks whether the prediction overlaps the
hull of the two ground-truth segments with IoU strictly above tau.

Functions that take ``(corpus, checkpoint)`` run the network; the
``*_from_predictions`` variants score an externally supplied
``(video_id, position) -> (start_s, end_s)`` mapping, which is how
third-party predictions are audited.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import filter_split
from .errors import CheckpointMismatchError, PredictionsMismatchError
from .losses import concat_queries
from .network import localize
from .segments import hull, iou, order_relation
from .training import Checkpoint, grid_from_snapshot


@dataclass
class EvalReport:
    recall_at: dict  # threshold -> recall
    temporal_consistency: float | None
    semantic_consistency: float | None
    per_query: list
    num_queries: int
    num_pairs: int
    split: str | None
    tau_eval: float


def _check_compatible(records, checkpoint: Checkpoint):
    """The checkpoint must have been trained for this data shape."""
    rec = records[0]
    checks = [
        ("l_c", checkpoint.config["l_c"], rec.clips.l_c),
        ("d_v", checkpoint.config["d_v"], rec.clips.matrix.shape[1]),
        ("d_t", checkpoint.config["d_t"], rec.paragraph[0].tokens.matrix.shape[1]),
    ]
    for name, expected, actual in checks:
        if expected != actual:
            raise CheckpointMismatchError(name, expected, actual)


def predict_sentences(records, checkpoint: Checkpoint) -> dict:
    """(video id, position) -> predicted (start_s, end_s) for every sentence."""
    _check_compatible(records, checkpoint)
    grid_config = grid_from_snapshot(checkpoint.config)
    preds = {}
    for rec in records:
        for sent in rec.paragraph:
            result = localize(rec, sent, checkpoint.params, grid_config)
            preds[(rec.id, sent.position)] = result.seconds
    return preds


def recall_from_predictions(records, preds: dict, thresholds) -> tuple:
    """Shared recall core; returns (recall dict, per-query detail rows)."""
    details = []
    for rec in records:
        for sent in rec.paragraph:
            gt = sent.gt_segment
            pred = preds[(rec.id, sent.position)]
            details.append({
                "video_id": rec.id,
                "position": sent.position,
                "predicted": [float(pred[0]), float(pred[1])],
                "ground_truth": [float(gt.start), float(gt.end)],
                "iou": iou(pred, gt),
            })
    ious = np.array([d["iou"] for d in details])
    recall = {float(m): float((ious > m).mean()) for m in thresholds}
    return recall, details


def recall_at_iou(corpus, checkpoint: Checkpoint, thresholds=(0.1, 0.3, 0.5),
                  split: str | None = None) -> dict:
    """Fraction of queries whose top-1 prediction beats each IoU threshold."""
    records = filter_split(corpus, split)
    preds = predict_sentences(records, checkpoint)
    recall, _ = recall_from_predictions(records, preds, thresholds)
    return recall


def _video_pairs(record):
    l_q = len(record.paragraph)
    for a in range(l_q):
        for b in range(a + 1, l_q):
            yield record.paragraph[a], record.paragraph[b]


def temporal_consistency_from_predictions(records, preds: dict) -> float | None:
    """Ratio of sentence pairs whose predictions are ordered like the truth."""
    consistent = total = 0
    for rec in records:
        for sent_a, sent_b in _video_pairs(rec):
            pred_a = preds[(rec.id, sent_a.position)]
            pred_b = preds[(rec.id, sent_b.position)]
            truth = order_relation(sent_a.gt_segment, sent_b.gt_segment)
            total += 1
            if order_relation(pred_a, pred_b) == truth:
                consistent += 1
    return consistent / total if total else None


def temporal_consistency(corpus, checkpoint: Checkpoint, split: str | None = None):
    records = filter_split(corpus, split)
    preds = predict_sentences(records, checkpoint)
    return temporal_consistency_from_predictions(records, preds)


def hull_consistency_from_predictions(records, preds: dict, tau_eval=0.5):
    """Prediction-only analogue of semantic consistency: the hull of the two
    per-sentence predictions must overlap the ground-truth hull above tau."""
    consistent = total = 0
    for rec in records:
        for sent_a, sent_b in _video_pairs(rec):
            pred_hull = hull(preds[(rec.id, sent_a.position)], preds[(rec.id, sent_b.position)])
            gt_hull = hull(sent_a.gt_segment, sent_b.gt_segment)
            total += 1
            if iou(pred_hull, gt_hull) > tau_eval:
                consistent += 1
    return consistent / total if total else None


def analyze_predictions(preds: dict, gt_map: dict, tau_eval=0.5) -> dict:
    """Score an external predictions mapping against ground truth alone.

    ``gt_map`` maps video id to the list of ground-truth segments in sentence
    position order. Every prediction key must resolve to a known (video,
    position); pairs where either side lacks a prediction are skipped and
    counted. Returns both pairwise consistency ratios.
    """
    unmatched = [
        f"{vid}:{pos}"
        for vid, pos in preds
        if vid not in gt_map or not 0 <= pos < len(gt_map[vid])
    ]
    if unmatched:
        raise PredictionsMismatchError(sorted(unmatched))
    tempo = sem = total = skipped = 0
    for vid in sorted(gt_map):
        segs = gt_map[vid]
        for a in range(len(segs)):
            for b in range(a + 1, len(segs)):
                if (vid, a) not in preds or (vid, b) not in preds:
                    skipped += 1
                    continue
                total += 1
                pred_a, pred_b = preds[(vid, a)], preds[(vid, b)]
                if order_relation(pred_a, pred_b) == order_relation(segs[a], segs[b]):
                    tempo += 1
                if iou(hull(pred_a, pred_b), hull(segs[a], segs[b])) > tau_eval:
                    sem += 1
    return {
        "temporal_consistency": tempo / total if total else None,
        "semantic_consistency": sem / total if total else None,
        "pairs_scored": total,
        "pairs_skipped": skipped,
    }


def semantic_consistency(corpus, checkpoint: Checkpoint, tau_eval=0.5,
                         split: str | None = None):
    """Localise each concatenated sentence pair; count predictions whose IoU
    with the hull of the pair's ground-truth segments exceeds tau_eval."""
    records = filter_split(corpus, split)
    _check_compatible(records, checkpoint)
    grid_config = grid_from_snapshot(checkpoint.config)
    max_concat = checkpoint.config.get("max_concat_len", 40)
    consistent = total = 0
    for rec in records:
        for sent_a, sent_b in _video_pairs(rec):
            combined = concat_queries(sent_a, sent_b, max_concat)
            result = localize(rec, combined, checkpoint.params, grid_config)
            gt_hull = hull(sent_a.gt_segment, sent_b.gt_segment)
            total += 1
            if iou(result.seconds, gt_hull) > tau_eval:
                consistent += 1
    return consistent / total if total else None


def count_pairs(records) -> int:
    return sum(len(r.paragraph) * (len(r.paragraph) - 1) // 2 for r in records)


def evaluate(corpus, checkpoint: Checkpoint, thresholds=(0.1, 0.3, 0.5),
             split: str | None = None, tau_eval=0.5) -> EvalReport:
    """Full report: recall at every threshold plus both consistency ratios."""
    records = filter_split(corpus, split)
    preds = predict_sentences(records, checkpoint)
    recall, details = recall_from_predictions(records, preds, thresholds)
    return EvalReport(
        recall_at=recall,
        temporal_consistency=temporal_consistency_from_predictions(records, preds),
        semantic_consistency=semantic_consistency(corpus, checkpoint, tau_eval, split),
        per_query=details,
        num_queries=len(details),
        num_pairs=count_pairs(records),
        split=split,
        tau_eval=tau_eval,
    )


def report_to_json(report: EvalReport) -> str:
    doc = {
        "schema_version": 1,
        "split": report.split,
        "thresholds": sorted(report.recall_at),
        "recall_at": {repr(m): report.recall_at[m] for m in sorted(report.recall_at)},
        "temporal_consistency": report.temporal_consistency,
        "semantic_consistency": report.semantic_consistency,
        "tau_eval": report.tau_eval,
        "num_queries": report.num_queries,
        "num_pairs": report.num_pairs,
        "per_query": report.per_query,
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def report_to_table(report: EvalReport) -> str:
    lines = [
        f"split: {report.split or 'all'}   queries: {report.num_queries}   "
        f"pairs: {report.num_pairs}",
    ]
    for m in sorted(report.recall_at):
        lines.append(f"recall @ IoU>{m:<4}  {report.recall_at[m]:.4f}")
    lines.append(f"temporal consistency   {_fmt(report.temporal_consistency)}")
    lines.append(f"semantic consistency   {_fmt(report.semantic_consistency)}")
    return "\n".join(lines)
