"""trace-score: score one document into a ".trsc" stream file.

Designed to sit behind the consumer's TRACE_SCORER_CMD template, e.g.

    TRACE_SCORER_CMD="trace-score --model {evaluator} --context {context} \
        --input {input_text} --output {output_stream}"

Prints exactly one summary line (doc id, token count, mean entropy) on
success.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from trace_scorer.backends import make_backend
from trace_scorer.scoring import ScorerConfig, score_document
from trace_scorer.trsc import write_stream_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trace-score", description=__doc__)
    parser.add_argument("--model", required=True, help="tiny:bigram | tiny:two-symbol | hf:<name>")
    parser.add_argument("--input", required=True, help="UTF-8 text file to score")
    parser.add_argument("--output", required=True, help="destination .trsc path")
    parser.add_argument("--context", type=int, default=1024)
    parser.add_argument("--doc-id", default=None, help="defaults to the input file stem")
    parser.add_argument("--stride", type=int, default=None, help="sliding-window stride (fidelity mode)")
    parser.add_argument("--device", default=None)
    parser.add_argument("--batch-size", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ScorerConfig(
        model=args.model,
        context_window=args.context,
        device=args.device,
        batch_size=args.batch_size,
        stride=args.stride,
    )
    text = Path(args.input).read_text(encoding="utf-8")
    if not text.strip():
        print(f"error: {args.input} is empty", file=sys.stderr)
        return 2
    backend = make_backend(config.model, device=config.device)
    ranks, entropies, _ = score_document(text, backend, config)
    doc_id = args.doc_id if args.doc_id is not None else Path(args.input).stem
    write_stream_file(
        args.output,
        doc_id=doc_id,
        evaluator_id=backend.name,
        vocab_size=backend.vocab_size,
        context_window=config.context_window,
        ranks=ranks,
        entropies=entropies,
    )
    mean_entropy = float(entropies.mean()) if len(entropies) else 0.0
    print(f"{doc_id} tokens={len(ranks)} mean_entropy={mean_entropy:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
