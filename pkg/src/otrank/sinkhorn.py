"""Entropic-regularized optimal transport between question and sentence words.

Couples two word point sets under their frequency marginals and a Euclidean
cost, then distills the coupling into (a) a transport cost used as a
question-relevance feature and (b) a "relevant context" word subset whose
mean embedding represents the sentence.

The solver runs in the log domain for stability at small regularization.
Updates are simultaneous half-steps of both dual potentials rather than
alternating full row/column scalings: averaging the previous potential with
its scaling update keeps the iteration convergent while making the whole
trajectory symmetric under swapping the two point sets, so the plan for the
swapped problem is exactly the transpose. The fixed point is the usual one:
``plan = diag(u) @ exp(-D/eps) @ diag(v)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Sentence, content_token_indices
from .embeddings import FrequencyTable, marginal_distribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SinkhornSettings:
    """Solver knobs. ``eps`` is set per instance as ``eps_scale * mean(D)``."""

    eps_scale: float = 0.1
    max_iter: int = 500
    tol: float = 1e-6


@dataclass
class TransportPlan:
    plan: np.ndarray  # (n, m), nonnegative
    epsilon: float
    iterations_used: int
    converged: bool


@dataclass
class AlignmentResult:
    """Everything the scorer needs from aligning one sentence to the question.

    ``relevant`` indexes the *filtered* sentence token list; the
    ``*_token_indices`` tuples map filtered positions back to positions in
    the original token lists.
    """

    plan: TransportPlan
    cost: float
    relevant: tuple[int, ...]
    representation: np.ndarray  # (d,)
    question_token_indices: tuple[int, ...]
    sentence_token_indices: tuple[int, ...]


def cost_matrix(xs, ys) -> np.ndarray:
    """Pairwise Euclidean distances, shape (len(xs), len(ys))."""
    X = np.asarray(xs, dtype=np.float64)
    Y = np.asarray(ys, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("point sets must be 2-D arrays of row vectors")
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("point sets must be nonempty")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _logsumexp_rows(M: np.ndarray) -> np.ndarray:
    mx = np.max(M, axis=1)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    return safe + np.log(np.sum(np.exp(M - safe[:, None]), axis=1))


def sinkhorn_plan(
    p: np.ndarray,
    q: np.ndarray,
    D: np.ndarray,
    eps: float,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> TransportPlan:
    """Solve entropic OT between marginals ``p`` and ``q`` under cost ``D``.

    Iterates damped log-domain potential updates until the worst row or
    column marginal violation of the reconstructed plan falls below ``tol``.
    If the budget runs out, returns the best iterate seen with
    ``converged=False`` (callers keep going; a warning is logged).
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    n, m = D.shape
    if p.shape != (n,) or q.shape != (m,):
        raise ValueError(f"marginal shapes {p.shape}/{q.shape} do not match cost {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError("cost matrix contains non-finite entries")
    if not (eps > 0):
        raise ValueError(f"regularization strength must be positive, got {eps}")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"marginal {name} must be nonnegative and sum to 1")

    with np.errstate(divide="ignore"):
        lp = np.log(p)
        lq = np.log(q)
    Dt = D.T
    f = np.zeros(n)
    g = np.zeros(m)

    def build(a, b, C):
        # -inf potentials (zero marginal entries) exponentiate to exact zeros.
        return np.exp((a[:, None] + b[None, :] - C) / eps)

    best_viol = np.inf
    best_plan = build(f, g, D)
    best_iter = 0
    for it in range(1, max_iter + 1):
        f_new = 0.5 * (f + eps * lp - eps * _logsumexp_rows((g[None, :] - D) / eps))
        g_new = 0.5 * (g + eps * lq - eps * _logsumexp_rows((f[None, :] - Dt) / eps))
        f, g = f_new, g_new
        plan = build(f, g, D)
        plan_t = build(g, f, Dt)  # bitwise transpose; keeps the violation check symmetric
        viol = max(
            np.max(np.abs(plan.sum(axis=1) - p)),
            np.max(np.abs(plan_t.sum(axis=1) - q)),
        )
        if viol < best_viol:
            best_viol, best_plan, best_iter = viol, plan, it
        if viol <= tol:
            return TransportPlan(plan=plan, epsilon=eps, iterations_used=it, converged=True)
    logger.warning(
        "sinkhorn did not converge in %d iterations (best violation %.3e)", max_iter, best_viol
    )
    return TransportPlan(plan=best_plan, epsilon=eps, iterations_used=best_iter, converged=False)


def transport_cost(plan: np.ndarray, D: np.ndarray) -> float:
    """Frobenius inner product of a plan with its cost matrix."""
    plan = np.asarray(plan, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if plan.shape != D.shape:
        raise ValueError(f"shape mismatch: plan {plan.shape} vs cost {D.shape}")
    return float(np.sum(plan * D))


def relevant_context(plan: np.ndarray) -> list[int]:
    """Column indices selected by row-wise argmax, deduplicated and ascending.

    Ties resolve to the smallest column index.
    """
    plan = np.asarray(plan)
    if plan.ndim != 2 or plan.shape[0] == 0:
        raise ValueError("plan must have at least one row")
    return sorted({int(np.argmax(row)) for row in plan})


def sentence_representation(sentence_embeddings, relevant) -> np.ndarray:
    """Mean of the embedding vectors selected as relevant context."""
    vecs = np.asarray(sentence_embeddings, dtype=np.float64)
    idx = list(relevant)
    if not idx:
        raise ValueError("relevant set must be nonempty")
    if min(idx) < 0 or max(idx) >= vecs.shape[0]:
        raise ValueError("relevant index out of range")
    return vecs[idx].mean(axis=0)


def align_sentence(
    question: Sentence,
    s: Sentence,
    question_vectors,
    sentence_vectors,
    ft: FrequencyTable,
    settings: SinkhornSettings = SinkhornSettings(),
) -> AlignmentResult:
    """Full question-to-sentence alignment pipeline.

    Filters both token lists, builds frequency marginals and the Euclidean
    cost, solves the transport problem at ``eps = eps_scale * mean(D)``, and
    pools the relevant-context embeddings into the sentence representation.

    Padding sentences short-circuit: zero cost, zero representation, and the
    single padding token as relevant context.
    """
    q_vecs = np.asarray(question_vectors, dtype=np.float64)
    q_idx = content_token_indices(question)
    if not q_idx:
        raise ValueError("question has no tokens to align")
    if q_vecs.shape[0] != len(question.tokens):
        raise ValueError(
            f"question has {len(question.tokens)} tokens but {q_vecs.shape[0]} vectors"
        )
    q_tokens = [question.tokens[i] for i in q_idx]
    p = marginal_distribution(q_tokens, ft)

    if s.is_padding:
        dim = q_vecs.shape[1]
        plan = TransportPlan(
            plan=p[:, None].copy(), epsilon=0.0, iterations_used=0, converged=True
        )
        return AlignmentResult(
            plan=plan,
            cost=0.0,
            relevant=(0,),
            representation=np.zeros(dim),
            question_token_indices=tuple(q_idx),
            sentence_token_indices=(0,),
        )

    s_vecs = np.asarray(sentence_vectors, dtype=np.float64)
    if s_vecs.shape[0] != len(s.tokens):
        raise ValueError(f"sentence has {len(s.tokens)} tokens but {s_vecs.shape[0]} vectors")
    s_idx = content_token_indices(s)
    if not s_idx:
        raise ValueError("cannot align a sentence with no tokens")
    s_tokens = [s.tokens[j] for j in s_idx]
    q_pts = q_vecs[q_idx]
    s_pts = s_vecs[s_idx]

    D = cost_matrix(q_pts, s_pts)
    eps = settings.eps_scale * float(D.mean())
    if not (eps > 0):
        eps = 1e-12  # degenerate all-identical embeddings; any eps gives the outer product
    tp = sinkhorn_plan(p, marginal_distribution(s_tokens, ft), D, eps,
                       settings.max_iter, settings.tol)
    rel = relevant_context(tp.plan)
    return AlignmentResult(
        plan=tp,
        cost=transport_cost(tp.plan, D),
        relevant=tuple(rel),
        representation=sentence_representation(s_pts, rel),
        question_token_indices=tuple(q_idx),
        sentence_token_indices=tuple(s_idx),
    )
