"""Command-line pipeline over the file formats.

Exit codes are a stable contract: 0 success, 2 usage error, 3 format
error, 4 I/O error. Stdout carries human summaries; files carry machine
output, written by the same library code paths the API exposes, so CLI
results are byte-identical to direct library calls.
"""

from __future__ import annotations

import functools
import os
import sys

import click

from . import decision, evaluate, geometry, stats, store
from .errors import FormatError, UsageError

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_IO = 4


def guarded(fn):
    """Map library errors onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UsageError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except FormatError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FORMAT)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _require_inputs(*paths: str) -> None:
    """Validate all paths up front, before any work starts."""
    for path in paths:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"input file not found: {path}")


def _require_output_dirs(*paths) -> None:
    for path in paths:
        if path is None:
            continue
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise FileNotFoundError(f"output directory not found: {parent}")


def _thread_cap() -> int | None:
    raw = os.environ.get("KAVGUARD_THREADS")
    if raw is None:
        return None
    try:
        cap = int(raw)
    except ValueError:
        raise UsageError(f"KAVGUARD_THREADS must be an integer, got {raw!r}")
    if cap < 1:
        raise UsageError(f"KAVGUARD_THREADS must be >= 1, got {cap}")
    return cap


@click.group()
@click.option("-v", "--verbose", count=True, help="Print extra progress detail.")
@click.pass_context
@guarded
def main(ctx, verbose):
    """Post-hoc uncertainty layer over activation-vector files."""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    # Internal parallelism is an implementation choice that must not change
    # outputs; the current implementation is single-threaded, so the cap is
    # validated and trivially honored.
    ctx.obj["threads"] = _thread_cap()


@main.command("fit")
@click.option("--input", "input_path", required=True, help="Training KAV file.")
@click.option("--output", "output_path", required=True, help="Stats JSON to write.")
@click.option("--members", "members_m", type=int, default=None,
              help=f"Also build a member store of this size "
                   f"(default {stats.DEFAULT_MEMBERS} when --members-out is set).")
@click.option("--members-out", "members_path", default=None,
              help="Member-store JSON to write.")
@click.option("--variance-floor", type=float, default=stats.DEFAULT_VARIANCE_FLOOR,
              show_default=True, help="Minimum per-dimension variance.")
@click.pass_context
@guarded
def cmd_fit(ctx, input_path, output_path, members_m, members_path, variance_floor):
    """Fit per-class statistics from a labeled KAV file in one pass."""
    _require_inputs(input_path)
    _require_output_dirs(output_path, members_path)
    dataset = store.read_kav(input_path)
    model = stats.fit(dataset, variance_floor=variance_floor)
    stats.save_stats(model, output_path)
    if members_path is not None or members_m is not None:
        if members_path is None:
            raise UsageError("--members requires --members-out")
        m = members_m if members_m is not None else stats.DEFAULT_MEMBERS
        member_store = stats.build_member_store(dataset, model, M=m,
                                                source_file=input_path)
        stats.save_members(member_store, members_path)
        if ctx.obj["verbose"]:
            click.echo(f"wrote member store: {members_path}")
    click.echo(f"fit: {len(dataset)} records, {len(model.classes)} classes, "
               f"dim {model.dim}")


@main.command("merge-stats")
@click.argument("inputs", nargs=-1, required=True)
@click.option("--output", "output_path", required=True, help="Merged stats JSON.")
@guarded
def cmd_merge_stats(inputs, output_path):
    """Merge stats files fitted on disjoint shards into one model."""
    _require_inputs(*inputs)
    _require_output_dirs(output_path)
    merged = stats.merge_models(stats.load_stats(path) for path in inputs)
    stats.save_stats(merged, output_path)
    click.echo(f"merged {len(inputs)} stats files: {len(merged.classes)} classes, "
               f"dim {merged.dim}")


@main.command("decide")
@click.option("--stats", "stats_path", required=True, help="Stats JSON from fit.")
@click.option("--input", "input_path", required=True, help="Test KAV file.")
@click.option("--k-percent", type=float, default=0.10, show_default=True,
              help="Step-2 closeness threshold.")
@click.option("--orientation", type=click.Choice(["below", "above"]),
              default="below", show_default=True,
              help="Outlier rule direction on the squared joint distance.")
@click.option("--top2", type=click.Choice(["logits", "distance", "auto"]),
              default="auto", show_default=True, help="Top-2 candidate source.")
@click.option("--output", "output_path", required=True, help="Verdict CSV to write.")
@guarded
def cmd_decide(stats_path, input_path, k_percent, orientation, top2, output_path):
    """Label each test record Certain, Uncertain, or Outlier."""
    _require_inputs(stats_path, input_path)
    _require_output_dirs(output_path)
    model = stats.load_stats(stats_path)
    dataset = store.read_kav(input_path)
    config = decision.DecisionConfig(
        k_percent=k_percent,
        orientation=decision.Orientation(orientation),
        top2_source=None if top2 == "auto" else decision.Top2Source(top2),
    )
    verdicts = list(decision.decide_batch(dataset, model, config))
    decision.write_verdicts(verdicts, output_path)
    counts = decision.category_counts(verdicts)
    click.echo("decide: " + " ".join(
        f"{cat.value.lower()}={counts[cat]}" for cat in decision.Category)
        + f" total={len(verdicts)}")


@main.command("overlap")
@click.option("--stats", "stats_path", required=True, help="Stats JSON from fit.")
@click.option("--output", "output_path", required=True, help="Matrix CSV to write.")
@guarded
def cmd_overlap(stats_path, output_path):
    """Pairwise class-distribution overlap matrix (Bhattacharyya)."""
    _require_inputs(stats_path)
    _require_output_dirs(output_path)
    model = stats.load_stats(stats_path)
    matrix = geometry.overlap_matrix(model)
    geometry.write_overlap_csv(matrix, output_path)
    click.echo(f"overlap: {len(matrix.class_ids)} classes")


@main.command("members")
@click.option("--members", "members_path", required=True,
              help="Member-store JSON from fit.")
@click.option("--class", "class_id", type=int, required=True,
              help="Class id to query.")
@click.option("-m", "count", type=int, required=True,
              help="How many nearest members to list.")
@guarded
def cmd_members(members_path, class_id, count):
    """List the nearest training records of one class."""
    _require_inputs(members_path)
    member_store = stats.load_members(members_path)
    for idx in stats.retrieve_members(member_store, class_id, count):
        click.echo(str(idx))


@main.group("eval")
def cmd_eval():
    """Detection-quality metrics over score and verdict files."""


@cmd_eval.command("auroc")
@click.option("--pos", "pos_path", required=True,
              help="Positive (in-distribution) score CSV.")
@click.option("--neg", "neg_path", required=True, help="Negative score CSV.")
@click.option("--output", "output_path", default=None,
              help="JSON report {auroc, curve}.")
@click.option("--curve-out", "curve_path", default=None,
              help="Plot-ready curve CSV (fpr,tpr).")
@guarded
def cmd_eval_auroc(pos_path, neg_path, output_path, curve_path):
    """AUROC separating two score files."""
    _require_inputs(pos_path, neg_path)
    _require_output_dirs(output_path, curve_path)
    pos = [row.score for row in store.read_scores(pos_path)]
    neg = [row.score for row in store.read_scores(neg_path)]
    curve = evaluate.auroc(pos, neg)
    if output_path is not None:
        evaluate.write_roc_report(curve, output_path)
    if curve_path is not None:
        evaluate.write_curve_csv(curve, curve_path)
    click.echo(f"auroc={curve.auroc!r}")


@cmd_eval.command("rate")
@click.option("--verdicts", "verdicts_path", required=True, help="Verdict CSV.")
@guarded
def cmd_eval_rate(verdicts_path):
    """Fraction of verdicts labeled Outlier."""
    _require_inputs(verdicts_path)
    rate = evaluate.outlier_rate(decision.read_verdicts(verdicts_path))
    click.echo(f"outlier_rate={rate!r}")


@cmd_eval.command("sweep")
@click.option("--level", "levels", multiple=True, required=True,
              metavar="NOISE=FILE", help="Noise level and its score CSV; repeat.")
@click.option("--baseline", "baseline_path", default=None,
              help="Reference (clean) score CSV for per-level AUROC.")
@click.option("--output", "output_path", required=True,
              help="Sweep CSV (noise_level,mean_confidence,auc).")
@guarded
def cmd_eval_sweep(levels, baseline_path, output_path):
    """Aggregate mean confidence and AUROC across noise levels."""
    parsed = {}
    for spec_arg in levels:
        noise, sep, path = spec_arg.partition("=")
        if not sep:
            raise UsageError(f"--level expects NOISE=FILE, got {spec_arg!r}")
        try:
            level = float(noise)
        except ValueError:
            raise UsageError(f"--level noise must be a number, got {noise!r}")
        if level in parsed:
            raise UsageError(f"duplicate noise level {level}")
        parsed[level] = path
    _require_inputs(*parsed.values())
    if baseline_path is not None:
        _require_inputs(baseline_path)
    _require_output_dirs(output_path)
    per_level = {lvl: [row.score for row in store.read_scores(path)]
                 for lvl, path in parsed.items()}
    baseline = None
    if baseline_path is not None:
        baseline = [row.score for row in store.read_scores(baseline_path)]
    report = evaluate.sweep_report_from_scores(per_level, baseline)
    evaluate.write_sweep_csv(report, output_path)
    click.echo(f"sweep: {len(report.levels)} levels")


if __name__ == "__main__":
    main()
