"""Command-line interface over the pipeline stages.

``synth``, ``chunk``, ``embed`` and ``train-svm`` are standalone utilities
on explicit files; ``train``, ``fuse``, ``swap-svm`` and ``eval`` execute a
JSON experiment config end to end (``train`` skips the test evaluation);
``report`` renders saved results as tables.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .. import chunking, corpus
from ..embeddings import DeterministicProvider, EmbeddingStore, embed as embed_content, save_store
from ..errors import PipelineError
from ..metrics import report_for_classification
from ..svm import OneVsRestSvmClassifier, SmoSvmClassifier, save_svm
from .config import load_config, parse_config
from .report import LAYOUTS, report_tables
from .run import load_result, run, save_result


@click.group()
def main():
    """Multimodal interview classification pipeline."""


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), help="SyntheticSpec JSON file.")
@click.option("--sessions", type=int, default=None, help="Override n_sessions.")
@click.option("--seed", type=int, default=None, help="Override the generator seed.")
@click.option("--out", required=True, type=click.Path(), help="Corpus JSONL to write.")
def synth(spec_path, sessions, seed, out):
    """Generate a synthetic corpus with a planted signal."""
    raw = json.loads(Path(spec_path).read_text(encoding="utf-8")) if spec_path else {}
    raw.setdefault("n_sessions", 100)
    raw.setdefault("seed", 0)
    if sessions is not None:
        raw["n_sessions"] = sessions
    if seed is not None:
        raw["seed"] = seed
    spec = corpus.SyntheticSpec.from_dict(raw)
    corpus.save_corpus(corpus.generate_synthetic(spec), out)
    click.echo(f"wrote {spec.n_sessions} sessions to {out}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--unit", type=click.Choice(["utterance", "qa"]), default="utterance")
@click.option("--window", type=int, default=10)
@click.option("--overlap", type=int, default=4)
@click.option("--out", required=True, type=click.Path())
def chunk(corpus_path, unit, window, overlap, out):
    """Chunk every session of a corpus into windowed text chunks."""
    sessions = corpus.load_corpus(corpus_path)
    chunked = [chunking.chunk_text(s, unit, window, overlap) for s in sessions]
    chunking.save_chunked(chunked, out)
    click.echo(f"wrote {sum(c.n_chunks for c in chunked)} chunks for {len(chunked)} sessions to {out}")


@main.command()
@click.option("--chunks", "chunks_path", required=True, type=click.Path(exists=True))
@click.option("--provider", type=click.Choice(["deterministic"]), default="deterministic",
              help="Store files and remote endpoints are driven through experiment configs.")
@click.option("--dim", type=int, default=32)
@click.option("--seed", type=int, default=0)
@click.option("--content", type=click.Choice(["text", "audio-span"]), default="text")
@click.option("--store", "store_out", required=True, type=click.Path(), help="Store JSONL to write.")
def embed(chunks_path, provider, dim, seed, content, store_out):
    """Embed chunk contents into an on-disk store."""
    chunked = chunking.load_chunked(chunks_path)
    prov = DeterministicProvider(dim=dim, seed=seed)
    store = EmbeddingStore(dim=dim, provider=provider)
    for cs in chunked:
        for c in cs.chunks:
            if content == "text":
                key = c.text
            else:
                key = f"audio:{cs.session_id}:{c.time_span[0]:.3f}-{c.time_span[1]:.3f}"
            if key not in store:
                store.put(key, embed_content(prov, key))
    save_store(store, store_out)
    click.echo(f"wrote {len(store)} vectors to {store_out}")


@main.command("train-svm")
@click.option("--features", required=True, type=click.Path(exists=True),
              help="NPZ with arrays X, y and optionally X_eval, y_eval.")
@click.option("--kernel", type=click.Choice(["linear", "rbf"]), default="linear")
@click.option("--C", "c_value", type=float, default=10.0)
@click.option("--gamma", type=float, default=None)
@click.option("--tol", type=float, default=1e-3)
@click.option("--out", required=True, type=click.Path(), help="Model base path (.json/.bin).")
def train_svm(features, kernel, c_value, gamma, tol, out):
    """Train an SVM on a features file and report accuracy."""
    data = np.load(features)
    X, y = data["X"], data["y"].astype(np.int64)
    cls = OneVsRestSvmClassifier if np.unique(y).size > 2 else SmoSvmClassifier
    model = cls(kernel=kernel, C=c_value, gamma=gamma, tol=tol).fit(X, y)
    save_svm(model, out)
    report = report_for_classification(model.predict(X), y)
    click.echo(f"train balanced accuracy: {report.balanced_accuracy:.4f}")
    if "X_eval" in data:
        eval_report = report_for_classification(model.predict(data["X_eval"]), data["y_eval"].astype(np.int64))
        click.echo(f"eval balanced accuracy: {eval_report.balanced_accuracy:.4f}")


def _run_config(config_path, seed, out, evaluate_test=True):
    config = load_config(config_path)
    raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    if seed is not None:
        raw.setdefault("seeds", {})
        raw["seeds"] = {**raw["seeds"], "data": seed, "init": seed, "search": seed}
    if out is not None:
        raw["output_dir"] = out
    if seed is not None or out is not None:
        config = parse_config(raw)
    return run(config, evaluate_test=evaluate_test)


def _echo_reports(result):
    for split, report in sorted(result.reports.items()):
        parts = [f"n={report.n}"]
        if report.balanced_accuracy is not None:
            parts.append(f"BA={report.balanced_accuracy:.4f}")
        if report.accuracy is not None:
            parts.append(f"ACC={report.accuracy:.4f}")
        if report.mae is not None:
            parts.append(f"MAE={report.mae:.4f}")
        click.echo(f"{split}: " + " ".join(parts))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override all seeds.")
@click.option("--out", type=click.Path(), default=None, help="Override output_dir.")
def train(config_path, seed, out):
    """Run the pipeline through training; evaluate train/dev only."""
    result = _run_config(config_path, seed, out, evaluate_test=False)
    _echo_reports(result)
    click.echo(f"artifacts: {json.dumps(result.artifacts, indent=2)}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def eval(config_path, seed, out):
    """Run the full pipeline and evaluate every split."""
    result = _run_config(config_path, seed, out)
    _echo_reports(result)
    click.echo(f"digest: {result.config_digest}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def fuse(config_path, seed, out):
    """Run a fusion config and print fusion artifacts."""
    result = _run_config(config_path, seed, out)
    if result.row_meta.get("fusion", "none") == "none":
        raise click.UsageError("config has no fusion stage; use eval instead")
    _echo_reports(result)
    click.echo(f"artifacts: {json.dumps(result.artifacts, indent=2)}")


@main.command("swap-svm")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def swap_svm(config_path, seed, out):
    """Run a config whose classifiers swap the MLP head for an SVM; print deltas."""
    config = load_config(config_path)
    swapped = [m for m, mc in config.modalities.items() if mc.classifier == "svm"]
    if not swapped and config.fusion.head != "svm":
        raise click.UsageError("config swaps no heads: set classifier 'svm' or fusion.head 'svm'")
    result = _run_config(config_path, seed, out)
    _echo_reports(result)
    for name, report in result.swap_reports.items():
        sign = "+" if report["delta"] >= 0 else ""
        click.echo(
            f"swap {name}: {report['metric']} {report['nn_score']:.4f} -> {report['svm_score']:.4f} "
            f"({sign}{report['delta']:.4f}, {'improved' if report['improved'] else 'worse'})"
        )


@main.command()
@click.argument("results", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--layout", type=click.Choice(list(LAYOUTS)), default="format_eval")
@click.option("--out", type=click.Path(), default=None, help="Base path for .md/.csv files.")
def report(results, layout, out):
    """Render saved result.json files as markdown and CSV tables."""
    loaded = [load_result(p) for p in results]
    markdown, csv = report_tables(loaded, layout)
    click.echo(markdown)
    if out:
        base = Path(out)
        base.with_suffix(".md").write_text(markdown, encoding="utf-8")
        base.with_suffix(".csv").write_text(csv, encoding="utf-8")
        click.echo(f"wrote {base.with_suffix('.md')} and {base.with_suffix('.csv')}")


def entrypoint():
    try:
        main(standalone_mode=True)
    except PipelineError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entrypoint()
