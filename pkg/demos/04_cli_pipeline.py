#!/usr/bin/env python3
"""Drive the full ``otrank`` command-line pipeline end to end.

Generates a corpus + embedding store, then runs: build-freq -> train ->
eval -> rerank -> align -> gradcheck, checking exit codes along the way.
Uses ``python -m otrank.cli`` so it works without the console script on
PATH.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from otrank import make_synthetic_corpus, save_corpus, write_embedding_store

workdir = Path(tempfile.mkdtemp())
print("working in", workdir)

train_c, dev_c, store = make_synthetic_corpus(
    n_train=40, n_dev=12, n_candidates=4, dim=12, seed=2
)
train_path = workdir / "train.jsonl"
dev_path = workdir / "dev.jsonl"
emb_path = workdir / "emb.bin"
save_corpus(train_c, train_path)
save_corpus(dev_c, dev_path)
write_embedding_store(emb_path, store)


def run(*args, expect=0):
    cmd = [sys.executable, "-m", "otrank.cli", *args]
    print("\n$ otrank", " ".join(args))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.stdout.strip():
        print(proc.stdout.strip()[:400])
    assert proc.returncode == expect, (proc.returncode, proc.stderr)
    return proc


run("build-freq", "--train", str(train_path), "--out", str(workdir / "freq.json"))
freq = json.loads((workdir / "freq.json").read_text())
print("frequency table over", freq["num_questions"], "questions,",
      len(freq["counts"]), "words")

config = {
    "train_corpus": str(train_path),
    "dev_corpus": str(dev_path),
    "embeddings": str(emb_path),
    "checkpoint_out": str(workdir / "model.ckpt"),
    "log_out": str(workdir / "train_log.jsonl"),
    "learning_rate": 1e-3,
    "epochs": 6,
    "seed": 0,
    "hidden_size": 64,
    "batch_size": 32,
}
(workdir / "config.json").write_text(json.dumps(config, indent=2))
run("train", "--config", str(workdir / "config.json"))
log_lines = (workdir / "train_log.jsonl").read_text().splitlines()
print("trained", len(log_lines), "epochs; last record:",
      json.loads(log_lines[-1])["dev_map"])

run("eval", "--checkpoint", str(workdir / "model.ckpt"), "--split", str(dev_path),
    "--embeddings", str(emb_path), "--out", str(workdir / "report.json"),
    "--per-question", str(workdir / "per_question.tsv"))
report = json.loads((workdir / "report.json").read_text())
print("eval report:", report)
assert report["p_at_1"] >= 0.9

run("rerank", "--checkpoint", str(workdir / "model.ckpt"), "--split", str(dev_path),
    "--embeddings", str(emb_path), "--out", str(workdir / "rankings.jsonl"))
first = json.loads((workdir / "rankings.jsonl").read_text().splitlines()[0])
print("top of first ranking:", first["ranking"][0])

qid = dev_c.instances[0].question_id
wid = dev_c.instances[0].windows[0].id
run("align", "--checkpoint", str(workdir / "model.ckpt"), "--split", str(dev_path),
    "--embeddings", str(emb_path), "--question-id", qid, "--window-id", wid,
    "--out", str(workdir / "alignment.json"))
pairs = json.loads((workdir / "alignment.json").read_text())["pairs"]
print("alignment roles:", [p["role"] for p in pairs],
      "costs:", [round(p["cost"], 3) for p in pairs])

run("gradcheck", "--seed", "0")

# Validation failures exit with code 1 and a one-line message.
run("eval", "--checkpoint", str(workdir / "missing.ckpt"), "--split", str(dev_path),
    "--embeddings", str(emb_path), expect=1)

print("\nCLI demo OK")
