"""Command-line pipeline: score, fingerprint, calibrate, attribute, evaluate.

Scoring is delegated to an external scorer process through the
TRACE_SCORER_CMD environment variable, a command template with the
placeholders {input_text} {output_stream} {context} {evaluator}. Everything
downstream of scoring is deterministic, so commands are idempotent for
unchanged inputs and every run with the same flags reproduces the same
bytes.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import shlex
import subprocess
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from tracefp import attribution, corpus, evaluation, fingerprint_io
from tracefp.entropy_fingerprint import entropy_fingerprint
from tracefp.rank_fingerprint import build_cluster_map, rank_fingerprint
from tracefp.scorestream import read_stream, truncate_stream
from tracefp.similarity import METRICS

SCORER_ENV = "TRACE_SCORER_CMD"


@dataclass
class RunConfig:
    """Pipeline defaults; flags override individual fields."""

    variant: str = "entropy"
    metric: str = "js"
    alpha: float = 1.5
    clusters: int = 50
    grid: int = 50
    order: int = 2
    max_tokens: int | None = None
    evaluator_id: str = "gpt2"
    context_window: int = 1024
    manifest: str | None = None
    streams: str | None = None
    pool_dir: str | None = None
    out: str | None = None


def _emit(summary: dict, errors: list[dict]) -> int:
    """Print a machine-readable summary; exit nonzero iff per-doc errors."""
    print(json.dumps({**summary, "errors": errors}, indent=2))
    return 1 if errors else 0


def _matches_config(existing, config: RunConfig) -> bool:
    if getattr(existing, "variant", None) != config.variant:
        return False
    if config.variant == "rank":
        return (
            existing.alpha == config.alpha
            and existing.requested_clusters == config.clusters
            and existing.order == config.order
        )
    return existing.grid_size == config.grid


def _fingerprint_one(config: RunConfig, stream_path: Path, out_path: Path, cmap) -> bool:
    """Returns False when an up-to-date output made the work unnecessary."""
    if out_path.exists() and out_path.stat().st_mtime >= stream_path.stat().st_mtime:
        try:
            if _matches_config(fingerprint_io.read_fingerprint(out_path), config):
                return False
        except Exception:
            pass  # unreadable or stale output: rebuild it
    stream = read_stream(stream_path)
    if config.max_tokens:
        stream = truncate_stream(stream, config.max_tokens)
    if config.variant == "rank":
        if stream.vocab_size != cmap.vocab_size:
            raise ValueError(
                f"stream {stream.doc_id!r} has vocab {stream.vocab_size}, cluster map expects {cmap.vocab_size}"
            )
        fp = rank_fingerprint(stream.ranks, cmap, order=config.order, evaluator_id=stream.evaluator_id)
    else:
        fp = entropy_fingerprint(stream, grid_size=config.grid)
    fingerprint_io.write_fingerprint(fp, out_path)
    return True


# --- subcommands ----------------------------------------------------------


def cmd_score(args) -> int:
    template = os.environ.get(SCORER_ENV)
    if not template:
        print(f"error: {SCORER_ENV} is not set", file=sys.stderr)
        return 2
    manifest = corpus.load_manifest(args.manifest)
    streams_dir = Path(args.streams)
    streams_dir.mkdir(parents=True, exist_ok=True)

    def score_one(rec: corpus.DocumentRecord):
        out_path = streams_dir / f"{_safe_name(rec.doc_id)}.trsc"
        text_path = Path(rec.text_path)
        if not text_path.exists():
            raise FileNotFoundError(f"text file missing: {text_path}")
        if out_path.exists() and out_path.stat().st_mtime >= text_path.stat().st_mtime:
            try:
                existing = read_stream(out_path)
                if existing.evaluator_id == args.evaluator and existing.context_window == args.context:
                    return "skipped"
            except Exception:
                pass
        cmd = [
            part.format(
                input_text=str(text_path),
                output_stream=str(out_path),
                context=args.context,
                evaluator=args.evaluator,
            )
            for part in shlex.split(template)
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(f"scorer exited {proc.returncode}: {proc.stderr.strip()[:500]}")
        read_stream(out_path)  # malformed output is an error now, not later
        return "scored"

    results, errors = _run_jobs(score_one, manifest.records, args.jobs, lambda r: r.doc_id)
    summary = {
        "command": "score",
        "scored": sum(1 for v in results.values() if v == "scored"),
        "skipped": sum(1 for v in results.values() if v == "skipped"),
    }
    return _emit(summary, errors)


def cmd_fingerprint(args) -> int:
    config = _config_from(args)
    streams_dir = Path(args.streams)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(streams_dir.glob("*.trsc"))
    cmap = None
    if config.variant == "rank":
        first = read_stream(paths[0]) if paths else None
        vocab = first.vocab_size if first else 2
        cmap = build_cluster_map(vocab, config.alpha, config.clusters)

    def fp_one(path: Path):
        made = _fingerprint_one(config, path, out_dir / (path.stem + ".trfp"), cmap)
        return "written" if made else "skipped"

    results, errors = _run_jobs(fp_one, paths, args.jobs, lambda p: p.stem)
    summary = {
        "command": "fingerprint",
        "written": sum(1 for v in results.values() if v == "written"),
        "skipped": sum(1 for v in results.values() if v == "skipped"),
    }
    return _emit(summary, errors)


def _load_fingerprints(fp_dir: Path, manifest: corpus.DatasetManifest, doc_ids) -> list[tuple[object, str, str]]:
    out = []
    for doc_id in sorted(doc_ids):
        rec = manifest.record(doc_id)
        path = fp_dir / f"{_safe_name(doc_id)}.trfp"
        if not path.exists():
            raise FileNotFoundError(f"missing fingerprint for {doc_id!r}: {path}")
        out.append((fingerprint_io.read_fingerprint(path), rec.author_label, doc_id))
    return out


def _calibrated_threshold(pool, dev_fps, metric: str, variant: str) -> attribution.ThresholdConfig:
    dev_results = attribution.make_dev_results(dev_fps, pool)
    return attribution.calibrate_threshold(dev_results, metric=metric, variant=variant)


def cmd_calibrate(args) -> int:
    config = _config_from(args)
    manifest = corpus.load_manifest(args.manifest)
    fp_dir = Path(args.fingerprints)
    plan = corpus.make_id_split(manifest)
    pool = attribution.build_pool(
        _load_fingerprints(fp_dir, manifest, plan.train_ids), metric=config.metric, variant=config.variant
    )
    dev_fps = _load_fingerprints(fp_dir, manifest, plan.dev_ids)
    threshold = _calibrated_threshold(pool, dev_fps, config.metric, config.variant)
    attribution.save_threshold(threshold, args.out)
    return _emit({"command": "calibrate", "threshold": threshold.threshold, "out": args.out}, [])


def cmd_attribute(args) -> int:
    config = _config_from(args)
    manifest = corpus.load_manifest(args.manifest)
    fp_dir = Path(args.fingerprints)
    if args.pool_dir:
        pool = attribution.load_pool(args.pool_dir)
    else:
        plan = corpus.make_id_split(manifest)
        pool = attribution.build_pool(
            _load_fingerprints(fp_dir, manifest, plan.train_ids), metric=config.metric, variant=config.variant
        )
    threshold = _resolve_threshold(args, pool, manifest, fp_dir, config)
    test_ids = [r.doc_id for r in manifest.records if r.split_role == "test"]
    test_fps = _load_fingerprints(fp_dir, manifest, test_ids)
    if test_fps and attribution.config_hash(test_fps[0][0]) != pool.config:
        # structural mismatch: refuse outright rather than per-document
        raise ValueError("test fingerprints were built under a different configuration than the pool")
    results = []
    errors = []
    for fp, _, doc_id in test_fps:
        try:
            res = attribution.attribute(fp, pool, threshold, doc_id=doc_id)
            results.append(
                {
                    "doc_id": res.doc_id,
                    "predicted_label": res.predicted_label,
                    "best_distance": res.best_distance,
                    "per_author_best": res.per_author_best,
                }
            )
        except Exception as exc:
            errors.append({"doc": doc_id, "error": str(exc)})
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2), encoding="utf-8")
    return _emit({"command": "attribute", "n_attributed": len(results), "threshold": threshold.threshold}, errors)


def cmd_evaluate(args) -> int:
    config = _config_from(args)
    manifest = corpus.load_manifest(args.manifest)
    fp_dir = Path(args.fingerprints)
    families = {r.author_label: r.family_label for r in manifest.records}

    if args.protocol == "ood-author":
        plans = corpus.make_author_holdout_splits(manifest)
        protocol = "OOD_AUTHOR"
    elif args.protocol == "ood-domain":
        ood_map = json.loads(Path(args.ood_genres).read_text(encoding="utf-8")) if args.ood_genres else {}
        plans = [corpus.make_domain_split(manifest, {a: set(gs) for a, gs in ood_map.items()})]
        protocol = "OOD_DOMAIN"
    else:
        plans = [corpus.make_id_split(manifest)]
        protocol = "ID"

    for plan in plans:
        if not plan.test_ids:
            raise ValueError(f"plan {plan.name!r} has no test documents; nothing to evaluate")
    splits = []
    pool_config = ""
    for plan in plans:
        pool = attribution.build_pool(
            _load_fingerprints(fp_dir, manifest, plan.train_ids), metric=config.metric, variant=config.variant
        )
        pool_config = pool.config
        threshold = _resolve_threshold(args, pool, manifest, fp_dir, config, plan=plan)
        golds, preds = [], []
        for fp, author, doc_id in _load_fingerprints(fp_dir, manifest, plan.test_ids):
            res = attribution.attribute(fp, pool, threshold, doc_id=doc_id)
            golds.append(author)
            preds.append(res.predicted_label)
        splits.append(evaluation.SplitScores(golds=golds, preds=preds, held_out=plan.held_out_authors))

    report = evaluation.run_protocol(
        splits,
        protocol,
        families=families,
        metadata={"metric": config.metric, "variant": config.variant, "config_hash": pool_config},
    )
    evaluation.write_report(report, args.out)
    if args.confusion_heatmap:
        normalized = evaluation.normalize_confusion(report.confusion)
        fingerprint_io.grid_to_pgm(normalized, args.confusion_heatmap)
    print(
        f"{protocol}: macro-F1 = {report.mean_f1:.4f} +/- {report.std_f1:.4f} "
        f"over {len(report.per_split_f1)} split(s)",
        file=sys.stderr,
    )
    return _emit({"command": "evaluate", "protocol": protocol, "mean_f1": report.mean_f1, "out": args.out}, [])


def cmd_build_pool(args) -> int:
    config = _config_from(args)
    manifest = corpus.load_manifest(args.manifest)
    plan = corpus.make_id_split(manifest)
    pool = attribution.build_pool(
        _load_fingerprints(Path(args.fingerprints), manifest, plan.train_ids),
        metric=config.metric,
        variant=config.variant,
    )
    attribution.save_pool(pool, args.out)
    return _emit({"command": "build-pool", "entries": len(pool.entries), "out": args.out}, [])


def cmd_export_heatmap(args) -> int:
    fp = fingerprint_io.read_fingerprint(args.fingerprint)
    # Rank grids are sparse and heavy-tailed: log scale by default. Entropy
    # grids are already smooth densities: linear by default.
    scale = args.scale or ("log" if fp.variant == "rank" else "linear")
    fingerprint_io.grid_to_pgm(fp.grid, args.out, log_scale=scale == "log")
    if args.csv:
        fingerprint_io.grid_to_csv(fp.grid, args.csv)
    return _emit({"command": "export-heatmap", "scale": scale, "out": args.out}, [])


def cmd_config(args) -> int:
    print(json.dumps(asdict(RunConfig()), indent=2))
    return 0


# --- plumbing -------------------------------------------------------------


def _safe_name(doc_id: str) -> str:
    return doc_id.replace("/", "__")


def _run_jobs(fn, items, jobs: int, describe):
    """Run fn per item, isolating per-item failures; order-stable results."""
    results: dict[str, str] = {}
    errors: list[dict] = []
    if jobs <= 1:
        for item in items:
            try:
                results[describe(item)] = fn(item)
            except Exception as exc:
                errors.append({"doc": describe(item), "error": str(exc)})
        return results, errors
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(fn, item): item for item in items}
        for fut in concurrent.futures.as_completed(futures):
            item = futures[fut]
            try:
                results[describe(item)] = fut.result()
            except Exception as exc:
                errors.append({"doc": describe(item), "error": str(exc)})
    errors.sort(key=lambda e: e["doc"])
    return results, errors


def _resolve_threshold(args, pool, manifest, fp_dir, config, plan=None) -> attribution.ThresholdConfig:
    if getattr(args, "threshold", None) is not None:
        try:
            value = float(args.threshold)
            return attribution.ThresholdConfig(metric=config.metric, variant=config.variant, threshold=value)
        except ValueError:
            return attribution.load_threshold(args.threshold)
    dev_ids = plan.dev_ids if plan is not None else corpus.make_id_split(manifest).dev_ids
    dev_fps = _load_fingerprints(fp_dir, manifest, dev_ids)
    return _calibrated_threshold(pool, dev_fps, config.metric, config.variant)


def _config_from(args) -> RunConfig:
    config = RunConfig()
    for name in ("variant", "metric", "alpha", "clusters", "grid", "order", "max_tokens"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "evaluator", None):
        config.evaluator_id = args.evaluator
    if getattr(args, "context", None):
        config.context_window = args.context
    return config


def _add_common(parser, *names):
    defaults = RunConfig()
    if "variant" in names:
        parser.add_argument("--variant", choices=["rank", "entropy"], default=defaults.variant)
    if "metric" in names:
        parser.add_argument("--metric", choices=sorted(METRICS), default=defaults.metric)
    if "params" in names:
        parser.add_argument("--alpha", type=float, default=defaults.alpha)
        parser.add_argument("--clusters", type=int, default=defaults.clusters)
        parser.add_argument("--grid", type=int, default=defaults.grid)
        parser.add_argument("--order", type=int, choices=[2, 3], default=defaults.order)
        parser.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    if "jobs" in names:
        parser.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracefp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = RunConfig()

    p = sub.add_parser("score", help="run the external scorer over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--streams", required=True, help="output directory for .trsc files")
    p.add_argument("--context", type=int, default=defaults.context_window)
    p.add_argument("--evaluator", default=defaults.evaluator_id)
    _add_common(p, "jobs")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fingerprint", help="fingerprint every stream in a directory")
    p.add_argument("--streams", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, "variant", "params", "jobs")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("calibrate", help="calibrate the rejection threshold on the dev split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, "variant", "metric", "params")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("attribute", help="attribute the manifest's test documents")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--pool-dir", dest="pool_dir")
    p.add_argument("--threshold", help="numeric value or path to a threshold file")
    p.add_argument("--out")
    _add_common(p, "variant", "metric", "params")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("evaluate", help="run a full protocol and write a report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--protocol", choices=["id", "ood-domain", "ood-author"], default="id")
    p.add_argument("--ood-genres", help="JSON file mapping author -> OOD genre list")
    p.add_argument("--threshold", help="numeric value or path to a threshold file")
    p.add_argument("--confusion-heatmap", help="also write a row-normalized confusion PGM here")
    p.add_argument("--out", required=True)
    _add_common(p, "variant", "metric", "params")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-pool", help="persist a reference pool directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, "variant", "metric", "params")
    p.set_defaults(func=cmd_build_pool)

    p = sub.add_parser("export-heatmap", help="render a fingerprint as a PGM image")
    p.add_argument("fingerprint")
    p.add_argument("--scale", choices=["linear", "log"])
    p.add_argument("--csv", help="also dump the raw grid values here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_heatmap)

    p = sub.add_parser("config", help="dump the default configuration as JSON")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
