#!/usr/bin/env python3
"""File-based pipeline demo with the built-in byte-bigram evaluator.

Generates a tiny character-statistics corpus, scores it through the
TRACE_SCORER_CMD subprocess template, fingerprints the streams, calibrates
a rejection threshold, and evaluates the ID protocol. Everything lands in
a work directory (default: a fresh temp dir) for inspection.

Both packages must be installed (`pip install -e . -e ./scorer`).
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

TEMPLATE = (
    "{python} -m trace_scorer.cli --model {{evaluator}} --context {{context}} "
    "--input {{input_text}} --output {{output_stream}}"
)

# per-author character palettes: crude but visibly different style statistics
PALETTES = {
    "alice": "etaoin shrdlu cmfwyp",
    "bob": "zqxjkv bpgwyf dlmnot",
    "carol": "0123456789 .,;:!? eta",
}


def make_corpus(workdir: Path, docs_per_author: int, doc_chars: int, seed: int) -> Path:
    rng = np.random.default_rng(seed)
    texts = workdir / "texts"
    texts.mkdir(parents=True)
    records = []
    for author, palette in PALETTES.items():
        chars = list(palette)
        for d in range(docs_per_author):
            body = "".join(rng.choice(chars, size=doc_chars))
            path = texts / f"{author}-{d}.txt"
            path.write_text(body, encoding="utf-8")
            role = "train" if d < docs_per_author - 2 else ("dev" if d == docs_per_author - 2 else "test")
            records.append(
                {
                    "doc_id": f"{author}-{d}",
                    "author_label": author,
                    "family_label": author,
                    "genres": ["LF"],
                    "split_role": role,
                    "text_path": str(path.resolve()),
                }
            )
    manifest = workdir / "manifest.json"
    manifest.write_text(json.dumps({"vocab_size": 256, "records": records}, indent=2), encoding="utf-8")
    return manifest


def run(cmd, env):
    print("$", " ".join(cmd))
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    sys.stderr.write(proc.stderr)
    if proc.returncode != 0:
        sys.stdout.write(proc.stdout)
        raise SystemExit(f"command failed with exit code {proc.returncode}")
    return proc.stdout


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default=None, help="default: fresh temp directory")
    parser.add_argument("--docs", type=int, default=6, help="documents per author")
    parser.add_argument("--chars", type=int, default=6000, help="characters per document")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="tracefp-demo-"))
    workdir.mkdir(parents=True, exist_ok=True)
    manifest = make_corpus(workdir, args.docs, args.chars, args.seed)

    env = dict(os.environ)
    env["TRACE_SCORER_CMD"] = TEMPLATE.format(python=sys.executable)

    streams, fps = workdir / "streams", workdir / "fps"
    threshold, report = workdir / "threshold.json", workdir / "report.json"
    base = [sys.executable, "-m", "tracefp.cli"]

    run(base + ["score", "--manifest", str(manifest), "--streams", str(streams),
                "--evaluator", "tiny:bigram", "--context", "256"], env)
    run(base + ["fingerprint", "--streams", str(streams), "--out", str(fps), "--grid", "30"], env)
    run(base + ["calibrate", "--manifest", str(manifest), "--fingerprints", str(fps),
                "--grid", "30", "--out", str(threshold)], env)
    run(base + ["evaluate", "--manifest", str(manifest), "--fingerprints", str(fps), "--grid", "30",
                "--protocol", "id", "--threshold", str(threshold), "--out", str(report)], env)

    result = json.loads(report.read_text())
    print(f"\nID macro-F1: {result['mean_f1']:.3f}")
    print(f"artifacts in {workdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
