"""``otrank`` command line: frequency building, training, reranking, evaluation,
alignment inspection, and the gradient audit.

Exit codes: 0 success, 1 validation error (bad inputs, failed audit),
2 unexpected runtime failure. Configuration precedence for ``train``:
command-line flags > config file > built-in defaults. Set ``OTRANK_LOG``
to error/warn/info/debug to control verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .corpus import load_corpus
from .embeddings import build_frequency_table, load_embedding_store
from .errors import OtrankError
from .metrics import evaluate, per_question_rows, rank_candidates
from .model import extract_instance_features, extract_window_features, window_forward
from .training import TrainConfig, gradcheck, load_checkpoint, save_checkpoint, train

logger = logging.getLogger("otrank")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("OTRANK_LOG", "warn").lower()
    if level not in _LOG_LEVELS:
        raise OtrankError(f"OTRANK_LOG must be one of {sorted(_LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(
        level=_LOG_LEVELS[level],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise OtrankError(f"{what} not found: {p}")
    return p


def _require_parent(path: str, what: str) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise OtrankError(f"output directory for {what} does not exist: {p.parent}")
    return p


def _dump_json(obj, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)


def _cmd_build_freq(args) -> int:
    corpus = load_corpus(_require_file(args.train, "training corpus"), split="train")
    out = _require_parent(args.out, "frequency table")
    ft = build_frequency_table(corpus)
    _dump_json({"counts": ft.counts, "num_questions": ft.num_questions}, str(out))
    logger.info("wrote frequency table for %d questions to %s", ft.num_questions, out)
    return 0


_CONFIG_PATH_KEYS = ("train_corpus", "dev_corpus", "embeddings", "checkpoint_out", "log_out")


def _cmd_train(args) -> int:
    cfg_path = _require_file(args.config, "config file")
    try:
        raw = json.loads(cfg_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise OtrankError(f"config file {cfg_path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise OtrankError("config file must hold a JSON object")

    paths = {k: raw.pop(k, None) for k in _CONFIG_PATH_KEYS}
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise OtrankError(f"unknown config keys: {sorted(unknown)}")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.epochs is not None:
        raw["epochs"] = args.epochs
    try:
        cfg = TrainConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise OtrankError(f"bad training configuration: {exc}") from exc

    for key in ("train_corpus", "embeddings", "checkpoint_out"):
        if not paths.get(key):
            raise OtrankError(f"config file must set {key!r}")
    train_path = _require_file(paths["train_corpus"], "training corpus")
    emb_path = _require_file(paths["embeddings"], "embedding store")
    ckpt_out = _require_parent(paths["checkpoint_out"], "checkpoint")
    log_out = _require_parent(paths["log_out"], "training log") if paths.get("log_out") else None
    dev = (
        load_corpus(_require_file(paths["dev_corpus"], "dev corpus"), split="dev")
        if paths.get("dev_corpus")
        else None
    )

    logger.info("effective config: %s", json.dumps(dataclasses.asdict(cfg), sort_keys=True))
    corpus = load_corpus(train_path, split="train")
    store = load_embedding_store(emb_path)
    result = train(corpus, store, cfg, dev_corpus=dev)
    save_checkpoint(ckpt_out, result.best)
    if log_out:
        with log_out.open("w", encoding="utf-8") as fh:
            for rec in result.history:
                fh.write(json.dumps(dataclasses.asdict(rec), sort_keys=True) + "\n")
    logger.info("saved checkpoint (epoch %d) to %s", result.best.epoch, ckpt_out)
    return 0


def _load_eval_inputs(args):
    ckpt = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    store = load_embedding_store(_require_file(args.embeddings, "embedding store"))
    return ckpt, store


def _cmd_rerank(args) -> int:
    ckpt, store = _load_eval_inputs(args)
    corpus = load_corpus(_require_file(args.split, "corpus split"), split="test")
    out = _require_parent(args.out, "rankings")
    settings = ckpt.config.sinkhorn_settings()
    with out.open("w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            feats = extract_instance_features(inst, store, ckpt.freq_table, settings)
            scored = [(f.window_id, window_forward(f, ckpt.params).p) for f in feats]
            ranking = rank_candidates(scored)
            fh.write(
                json.dumps(
                    {
                        "question_id": inst.question_id,
                        "ranking": [{"window_id": wid, "score": s} for wid, s in ranking],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    logger.info("wrote rankings for %d questions to %s", len(corpus.instances), out)
    return 0


def _cmd_eval(args) -> int:
    ckpt, store = _load_eval_inputs(args)
    split_paths = args.split
    if len(split_paths) > 1 and not args.combine_dev_test:
        raise OtrankError("multiple --split files require --combine-dev-test")
    instances = []
    for sp in split_paths:
        instances.extend(load_corpus(_require_file(sp, "corpus split"), split="test").instances)
    from .corpus import Corpus

    corpus = Corpus(instances=tuple(instances), split="test")
    report = evaluate(corpus, ckpt, store)
    _dump_json(
        {
            "p_at_1": report.p_at_1,
            "map": report.map,
            "mrr": report.mrr,
            "questions": report.num_questions_evaluated,
        },
        args.out,
    )
    if args.per_question:
        rows = per_question_rows(corpus, ckpt, store)
        with _require_parent(args.per_question, "per-question TSV").open(
            "w", encoding="utf-8"
        ) as fh:
            fh.write("question_id\tp_at_1\tap\trr\n")
            for qid, p1, ap, rr in rows:
                fh.write(f"{qid}\t{p1}\t{ap!r}\t{rr!r}\n")
    return 0


def _cmd_align(args) -> int:
    ckpt, store = _load_eval_inputs(args)
    corpus = load_corpus(_require_file(args.split, "corpus split"), split="test")
    inst = next((i for i in corpus.instances if i.question_id == args.question_id), None)
    if inst is None:
        raise OtrankError(f"question {args.question_id!r} not found in {args.split}")
    window = next((w for w in inst.windows if w.id == args.window_id), None)
    if window is None:
        raise OtrankError(
            f"window {args.window_id!r} not found under question {args.question_id!r}"
        )
    feats = extract_window_features(
        inst.question, window, inst.question_id, store, ckpt.freq_table,
        ckpt.config.sinkhorn_settings(), keep_alignments=True,
    )
    sentences = (window.cand, window.prev, window.next)
    roles = ("candidate", "prev", "next")
    report = {"question_id": inst.question_id, "window_id": window.id, "pairs": []}
    for role, sent, res in zip(roles, sentences, feats.alignments):
        surfaces = [sent.tokens[res.sentence_token_indices[j]].surface for j in res.relevant]
        report["pairs"].append(
            {
                "role": role,
                "is_padding": sent.is_padding,
                "plan": [[float(v) for v in row] for row in res.plan.plan],
                "converged": res.plan.converged,
                "iterations": res.plan.iterations_used,
                "cost": res.cost,
                "relevant": [
                    {"index": int(j), "surface": s} for j, s in zip(res.relevant, surfaces)
                ],
                "representation_norm": float(
                    (res.representation ** 2).sum() ** 0.5
                ),
            }
        )
    _dump_json(report, args.out)
    return 0


def _cmd_gradcheck(args) -> int:
    report = gradcheck(seed=args.seed)
    _dump_json(
        {
            "per_tensor_max_rel_err": report.per_tensor,
            "max_rel_err": report.max_rel_err,
            "threshold": report.threshold,
            "step": report.step,
            "ok": report.ok,
        },
        args.out,
    )
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otrank",
        description="Score and rerank answer-candidate sentences with "
        "optimal-transport alignment features.",
    )
    parser.add_argument("--version", action="version", version=f"otrank {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def subcommand(name, **kw):
        # every subcommand shows flag defaults in --help
        kw.setdefault("formatter_class", argparse.ArgumentDefaultsHelpFormatter)
        return subparsers.add_parser(name, **kw)

    p = subcommand("build-freq", help="build the question word-frequency table")
    p.add_argument("--train", required=True, help="training corpus JSONL")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_build_freq)

    p = subcommand("train", help="train a model from a JSON config file")
    p.add_argument("--config", required=True,
                   help="JSON config with paths and hyperparameters")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed (config default: 0)")
    p.add_argument("--epochs", type=int, default=None,
                   help="override the config epoch count (config default: 10)")
    p.set_defaults(func=_cmd_train)

    p = subcommand("rerank", help="write per-question rankings as JSONL")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--split", required=True, help="corpus JSONL to rerank")
    p.add_argument("--embeddings", required=True, help="binary embedding store")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=_cmd_rerank)

    p = subcommand("eval", help="compute P@1 / MAP / MRR on a split")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--split", required=True, action="append",
                   help="corpus JSONL (repeat with --combine-dev-test to pool splits)")
    p.add_argument("--embeddings", required=True, help="binary embedding store")
    p.add_argument("--combine-dev-test", action="store_true",
                   help="pool all --split files into one report")
    p.add_argument("--out", default=None, help="JSON report path (stdout when omitted)")
    p.add_argument("--per-question", default=None, help="optional per-question TSV path")
    p.set_defaults(func=_cmd_eval)

    p = subcommand("align", help="inspect the transport alignment for one window")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--split", required=True, help="corpus JSONL holding the window")
    p.add_argument("--embeddings", required=True, help="binary embedding store")
    p.add_argument("--question-id", required=True, help="question to inspect")
    p.add_argument("--window-id", required=True, help="candidate window to inspect")
    p.add_argument("--out", default=None, help="JSON report path (stdout when omitted)")
    p.set_defaults(func=_cmd_align)

    p = subcommand("gradcheck", help="finite-difference audit of the gradients")
    p.add_argument("--seed", type=int, default=0, help="seed for the random micro-model")
    p.add_argument("--out", default=None, help="JSON report path (stdout when omitted)")
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        _setup_logging()
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for usage errors
            return 0 if exc.code in (0, None) else 1
        return args.func(args)
    except OtrankError as exc:
        logger.error("%s", exc)
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (ValueError, FloatingPointError, OSError) as exc:
        logger.exception("command failed")
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
