"""Ranking construction and evaluation: precision-at-1, MAP, MRR.

Per-question values are computed with exact rational arithmetic and only
converted to float at the end, so randomized cross-checks against the
definitional formulas hold with zero tolerance. Questions with no positive
candidate are excluded from every metric (the "clean" evaluation
convention).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .corpus import Corpus
from .model import extract_instance_features, window_forward

Ranking = list[tuple[str, float]]


@dataclass(frozen=True)
class MetricsReport:
    p_at_1: float
    map: float
    mrr: float
    num_questions_evaluated: int


def rank_candidates(scores: list[tuple[str, float]]) -> Ranking:
    """Stable descending sort; ties keep the original candidate order."""
    if not scores:
        raise ValueError("cannot rank an empty candidate list")
    return sorted(scores, key=lambda item: -item[1])


def precision_at_1(ranking: Ranking, labels: dict[str, bool]) -> int:
    """1 if the top-ranked candidate is labeled correct, else 0."""
    return int(bool(labels[ranking[0][0]]))


def average_precision(ranking: Ranking, labels: dict[str, bool]) -> float:
    """Mean of precision@k over the ranks k holding relevant items."""
    relevant_total = sum(1 for wid, _ in ranking if labels[wid])
    if relevant_total == 0:
        raise ValueError("average precision needs at least one relevant candidate")
    hits = 0
    acc = Fraction(0)
    for k, (wid, _) in enumerate(ranking, start=1):
        if labels[wid]:
            hits += 1
            acc += Fraction(hits, k)
    return float(acc / relevant_total)


def reciprocal_rank(ranking: Ranking, labels: dict[str, bool]) -> float:
    """1 / rank of the first relevant candidate."""
    for k, (wid, _) in enumerate(ranking, start=1):
        if labels[wid]:
            return float(Fraction(1, k))
    raise ValueError("reciprocal rank needs at least one relevant candidate")


def evaluate(corpus: Corpus, checkpoint, store) -> MetricsReport:
    """Score every window with the checkpointed model and aggregate metrics.

    ``checkpoint`` must provide ``params``, ``freq_table``, and a config with
    ``sinkhorn_settings()`` (see :class:`otrank.training.Checkpoint`).
    """
    if checkpoint.freq_table is None:
        raise ValueError("checkpoint carries no frequency table; cannot align")
    settings = checkpoint.config.sinkhorn_settings()
    rows = []
    for inst in corpus.instances:
        labels = {w.id: bool(w.cand.label) for w in inst.windows}
        if not any(labels.values()):
            continue
        feats = extract_instance_features(inst, store, checkpoint.freq_table, settings)
        scored = [(f.window_id, window_forward(f, checkpoint.params).p) for f in feats]
        ranking = rank_candidates(scored)
        rows.append(
            (
                precision_at_1(ranking, labels),
                average_precision(ranking, labels),
                reciprocal_rank(ranking, labels),
            )
        )
    if not rows:
        raise ValueError("no evaluable questions: every question lacks a positive label")
    n = len(rows)
    return MetricsReport(
        p_at_1=sum(r[0] for r in rows) / n,
        map=sum(r[1] for r in rows) / n,
        mrr=sum(r[2] for r in rows) / n,
        num_questions_evaluated=n,
    )


def per_question_rows(corpus: Corpus, checkpoint, store):
    """(question_id, p@1, ap, rr) rows for evaluable questions, corpus order."""
    settings = checkpoint.config.sinkhorn_settings()
    out = []
    for inst in corpus.instances:
        labels = {w.id: bool(w.cand.label) for w in inst.windows}
        if not any(labels.values()):
            continue
        feats = extract_instance_features(inst, store, checkpoint.freq_table, settings)
        scored = [(f.window_id, window_forward(f, checkpoint.params).p) for f in feats]
        ranking = rank_candidates(scored)
        out.append(
            (
                inst.question_id,
                precision_at_1(ranking, labels),
                average_precision(ranking, labels),
                reciprocal_rank(ranking, labels),
            )
        )
    return out
