"""Corpus data model: tokenization, stopword filtering, context padding, JSONL I/O.

A corpus is a list of questions, each with an ordered set of candidate
windows. A window bundles a candidate sentence with the previous and next
sentences of its source paragraph; missing context is replaced by a fixed
padding sentence so every window always has exactly three sentences.

The tokenizer is deliberately minimal and fully deterministic: lowercase,
split on whitespace, and detach leading/trailing punctuation into separate
tokens. The stoplist ships with the package (``stopwords.txt``).
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import CorpusFormatError

ROLE_QUESTION = "question"
ROLE_CANDIDATE = "candidate"
ROLE_PREV = "prev"
ROLE_NEXT = "next"

PAD_TEXT = "<pad>"

_PUNCT = frozenset(string.punctuation)


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    """The packaged English stoplist (lowercased words)."""
    text = resources.files("otrank").joinpath("stopwords.txt").read_text("utf-8")
    words = [ln.strip() for ln in text.splitlines()]
    return frozenset(w for w in words if w and not w.startswith("#"))


@dataclass(frozen=True)
class Token:
    surface: str
    normalized: str
    is_content: bool


@dataclass(frozen=True)
class Sentence:
    text: str
    tokens: tuple[Token, ...]
    role: str
    is_padding: bool = False
    label: bool | None = None


@dataclass(frozen=True)
class CandidateWindow:
    """A candidate sentence plus its surrounding context sentences.

    ``prev``/``next`` may be ``None`` before :func:`pad_context` runs; after
    padding they are always sentences (possibly padding sentences).
    """

    id: str
    cand: Sentence
    prev: Sentence | None
    next: Sentence | None


@dataclass(frozen=True)
class QAInstance:
    question_id: str
    question: Sentence
    windows: tuple[CandidateWindow, ...]


@dataclass(frozen=True)
class Corpus:
    instances: tuple[QAInstance, ...]
    split: str  # train | dev | test


def _token(surface: str) -> Token:
    normalized = surface.lower()
    is_content = normalized not in stopwords() and not all(c in _PUNCT for c in normalized)
    return Token(surface=surface, normalized=normalized, is_content=is_content)


def _split_chunk(chunk: str) -> list[Token]:
    leading: list[str] = []
    while chunk and chunk[0] in _PUNCT:
        leading.append(chunk[0])
        chunk = chunk[1:]
    trailing: list[str] = []
    while chunk and chunk[-1] in _PUNCT:
        trailing.append(chunk[-1])
        chunk = chunk[:-1]
    parts = leading + ([chunk] if chunk else []) + trailing[::-1]
    return [_token(p) for p in parts]


def tokenize(text: str) -> list[Token]:
    """Deterministically tokenize raw text.

    Lowercases, splits on whitespace, and peels leading/trailing punctuation
    characters off each chunk into their own tokens. Tokens that are pure
    punctuation or appear in the stoplist are marked non-content.
    """
    out: list[Token] = []
    for chunk in text.split():
        out.extend(_split_chunk(chunk))
    return out


def make_sentence(text: str, role: str, label: bool | None = None) -> Sentence:
    return Sentence(text=text, tokens=tuple(tokenize(text)), role=role, label=label)


def padding_sentence(role: str) -> Sentence:
    """The fixed single-token placeholder used for missing context."""
    tok = Token(surface=PAD_TEXT, normalized=PAD_TEXT, is_content=False)
    return Sentence(text=PAD_TEXT, tokens=(tok,), role=role, is_padding=True, label=None)


def content_tokens(s: Sentence) -> list[Token]:
    """Tokens that survive stopword/punctuation filtering, in order.

    Falls back to the unfiltered tokens when filtering would empty a
    nonempty sentence, so downstream alignment always has a nonempty point
    set. Padding sentences have no content.
    """
    return [s.tokens[i] for i in content_token_indices(s)]


def content_token_indices(s: Sentence) -> list[int]:
    """Indices into ``s.tokens`` selected by :func:`content_tokens`."""
    if s.is_padding or not s.tokens:
        return []
    kept = [i for i, t in enumerate(s.tokens) if t.is_content]
    return kept if kept else list(range(len(s.tokens)))


def pad_context(w: CandidateWindow) -> CandidateWindow:
    """Replace any absent prev/next sentence by a padding sentence. Idempotent."""
    prev = w.prev if w.prev is not None else padding_sentence(ROLE_PREV)
    nxt = w.next if w.next is not None else padding_sentence(ROLE_NEXT)
    if prev is w.prev and nxt is w.next:
        return w
    return replace(w, prev=prev, next=nxt)


def _as_label(value, where: str) -> bool:
    if value is True or value == 1:
        return True
    if value is False or value == 0:
        return False
    raise CorpusFormatError(f"{where}: label must be 0 or 1, got {value!r}")


def _as_optional_label(value, where: str) -> bool | None:
    if value is None:
        return None
    return _as_label(value, where)


def _context_sentence(text, label, role: str, where: str) -> Sentence | None:
    # Whitespace-only context is treated as absent (padded later).
    if text is None or (isinstance(text, str) and not text.strip()):
        return None
    if not isinstance(text, str):
        raise CorpusFormatError(f"{where}: context text must be a string or null")
    return make_sentence(text, role, label=_as_optional_label(label, where))


def load_corpus(path: str | Path, split: str) -> Corpus:
    """Load a JSONL corpus file.

    One JSON object per line::

        {"question_id": str, "question": str,
         "candidates": [{"id": str, "text": str, "label": 0|1,
                         "prev": str|null, "prev_label": 0|1|null,
                         "next": str|null, "next_label": 0|1|null}]}

    All sentences are tokenized, missing contexts padded, and invariants
    validated. Raises :class:`CorpusFormatError` naming the offending line.
    """
    if split not in ("train", "dev", "test"):
        raise CorpusFormatError(f"unknown split {split!r}")
    path = Path(path)
    instances: list[QAInstance] = []
    seen_qids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name} line {lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{where}: invalid JSON ({exc.msg})") from exc
            instances.append(_parse_instance(rec, where, seen_qids))
    return Corpus(instances=tuple(instances), split=split)


def _parse_instance(rec, where: str, seen_qids: set[str]) -> QAInstance:
    if not isinstance(rec, dict):
        raise CorpusFormatError(f"{where}: record must be a JSON object")
    qid = rec.get("question_id")
    if not isinstance(qid, str) or not qid:
        raise CorpusFormatError(f"{where}: missing or empty question_id")
    if qid in seen_qids:
        raise CorpusFormatError(f"{where}: duplicate question_id {qid!r}")
    seen_qids.add(qid)

    qtext = rec.get("question")
    if not isinstance(qtext, str) or not qtext.strip():
        raise CorpusFormatError(f"{where}: missing or empty question text")
    question = make_sentence(qtext, ROLE_QUESTION)

    cands = rec.get("candidates")
    if not isinstance(cands, list) or not cands:
        raise CorpusFormatError(f"{where}: candidates must be a nonempty list")

    windows: list[CandidateWindow] = []
    seen_wids: set[str] = set()
    for k, c in enumerate(cands):
        cwhere = f"{where} candidate {k}"
        if not isinstance(c, dict):
            raise CorpusFormatError(f"{cwhere}: must be a JSON object")
        wid = c.get("id")
        if not isinstance(wid, str) or not wid:
            raise CorpusFormatError(f"{cwhere}: missing or empty id")
        if wid in seen_wids:
            raise CorpusFormatError(f"{cwhere}: duplicate window id {wid!r}")
        seen_wids.add(wid)
        text = c.get("text")
        if not isinstance(text, str) or not text.strip():
            raise CorpusFormatError(f"{cwhere}: missing or empty candidate text")
        if "label" not in c or c["label"] is None:
            raise CorpusFormatError(f"{cwhere}: candidate is missing its label")
        cand = make_sentence(text, ROLE_CANDIDATE, label=_as_label(c["label"], cwhere))
        prev = _context_sentence(c.get("prev"), c.get("prev_label"), ROLE_PREV, cwhere)
        nxt = _context_sentence(c.get("next"), c.get("next_label"), ROLE_NEXT, cwhere)
        windows.append(pad_context(CandidateWindow(id=wid, cand=cand, prev=prev, next=nxt)))
    return QAInstance(question_id=qid, question=question, windows=tuple(windows))


def _label_json(label: bool | None):
    return None if label is None else int(label)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to JSONL; inverse of :func:`load_corpus`.

    Padding sentences are written as null context so that a load/save cycle
    reproduces the file and a save/load cycle reproduces the data model.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            cands = []
            for w in inst.windows:
                prev = w.prev if w.prev is not None and not w.prev.is_padding else None
                nxt = w.next if w.next is not None and not w.next.is_padding else None
                cands.append(
                    {
                        "id": w.id,
                        "text": w.cand.text,
                        "label": int(bool(w.cand.label)),
                        "prev": prev.text if prev else None,
                        "prev_label": _label_json(prev.label) if prev else None,
                        "next": nxt.text if nxt else None,
                        "next_label": _label_json(nxt.label) if nxt else None,
                    }
                )
            rec = {
                "question_id": inst.question_id,
                "question": inst.question.text,
                "candidates": cands,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
