"""Command-line surface for the toolkit.

Dataset commands operate on manifest files directly; run commands operate on
a runs root directory resolved from --runs, the DETLENS_RUNS_ROOT environment
variable, or ./runs in that order.
"""

from __future__ import annotations

import dataclasses
import functools
import json
from pathlib import Path

import click

from . import synth
from .dataset import (
    DEFAULT_PAD_FILL,
    ManifestError,
    Padding,
    audit_out_of_bounds,
    import_odgt,
    load_manifest,
    pad_manifest,
    relabel,
    sample,
    save_manifest,
)
from .detector import DetectorError, create_adapter, load_detector_config
from .evaluation import CategoryStats
from .geometry import Detection, clamp_box
from .imgio import load_image, save_image
from .pipeline import (
    RemediationPlan,
    RunConfig,
    apply_remediation,
    categorize_manifest,
    compare_runs,
    load_categories,
    load_predictions,
    predict_manifest,
    run_debug,
    run_dir,
    verify_run,
)
from .reporting import (
    count_vacuous_correct,
    format_comparison_text,
    format_stats_text,
    report_comparison,
    report_run,
)
from .saliency import (
    DEFAULT_GRID_SIZE,
    DEFAULT_KEEP_PROBABILITY,
    DEFAULT_NUM_MASKS,
    MaskSpec,
    SaliencyError,
    explain,
    render_overlay,
    write_raw,
    write_sidecar,
)

_RUNS_OPTION = click.option(
    "--runs",
    "runs_root",
    envvar="DETLENS_RUNS_ROOT",
    default="runs",
    show_default=True,
    type=click.Path(file_okay=False),
    help="Directory holding run artifacts.",
)


def _friendly_errors(fn):
    """Turn domain errors into clean CLI failures instead of tracebacks."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ManifestError, DetectorError, SaliencyError) as exc:
            raise click.ClickException(str(exc)) from exc
        except KeyError as exc:
            raise click.ClickException(f"unknown id {exc.args[0]!r}") from exc
        except (ValueError, FileNotFoundError, RuntimeError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


@click.group()
@click.version_option(package_name="detlens")
def main():
    """Debugging toolkit for human-detection models."""


@main.command("import-odgt")
@click.argument("odgt", type=click.Path(exists=True, dir_okay=False))
@click.option("--images", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory the ODGT image IDs resolve against.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_friendly_errors
def import_odgt_cmd(odgt, images, output):
    """Convert an ODGT annotation file into a manifest."""
    manifest, skipped = import_odgt(odgt, images)
    save_manifest(manifest, output)
    click.echo(f"imported {len(manifest)} images to {output}")
    if skipped:
        click.echo(f"skipped {skipped} records with missing image files")


@main.command("sample")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_friendly_errors
def sample_cmd(manifest, seed, output):
    """Draw the reproducible evaluation subset of a manifest."""
    source = load_manifest(manifest)
    subset = sample(source, seed)
    save_manifest(subset, output)
    click.echo(f"sampled {len(subset)} of {len(source)} images to {output}")


@main.command("audit")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Also write the full report as JSON.")
@_friendly_errors
def audit_cmd(manifest, output):
    """Flag ground-truth boxes that leave their image frame."""
    report = audit_out_of_bounds(load_manifest(manifest))
    click.echo(f"audited {report.boxes_audited} boxes: {report.boxes_outside} outside the frame")
    for violation, count in sorted(report.counts_by_violation().items()):
        if count:
            click.echo(f"  {violation}: {count}")
    for entry in report.entries:
        click.echo(f"  {entry.record_id} box {entry.box_index}: {entry.violation}")
    if output:
        Path(output).write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")


@main.command("relabel")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_friendly_errors
def relabel_cmd(manifest, output):
    """Clamp out-of-frame boxes into their image frame."""
    fixed, summary = relabel(load_manifest(manifest))
    save_manifest(fixed, output)
    click.echo(
        f"relabeled {summary.boxes_changed} boxes, dropped {summary.boxes_dropped}; "
        f"wrote {output}"
    )


@main.command("pad")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--top", default=0, show_default=True, type=int)
@click.option("--left", default=0, show_default=True, type=int)
@click.option("--right", default=0, show_default=True, type=int)
@click.option("--bottom", default=0, show_default=True, type=int)
@click.option("--fill", default=DEFAULT_PAD_FILL, show_default=True, type=int)
@click.option("--images-out", type=click.Path(file_okay=False),
              help="Write padded image files here (manifest paths point at them).")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_friendly_errors
def pad_cmd(manifest, top, left, right, bottom, fill, images_out, output):
    """Pad every image border, translating boxes to match."""
    padding = Padding(top=top, left=left, right=right, bottom=bottom)
    padded = pad_manifest(load_manifest(manifest), padding, fill, out_dir=images_out)
    save_manifest(padded, output)
    click.echo(f"padded {len(padded)} images by {padding.as_tuple()} to {output}")


@main.command("predict")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--detector", "detector_config", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_friendly_errors
def predict_cmd(manifest, detector_config, output):
    """Run the configured detector over every manifest image."""
    records = load_manifest(manifest)
    adapter = create_adapter(load_detector_config(detector_config))
    try:
        predict_manifest(records, adapter, output)
    finally:
        adapter.close()
    click.echo(f"wrote predictions for {len(records)} images to {output}")


@main.command("categorize")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.argument("predictions", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_friendly_errors
def categorize_cmd(manifest, predictions, output):
    """Assign each image one of the four outcome categories."""
    payload = categorize_manifest(load_manifest(manifest), load_predictions(predictions))
    Path(output).write_text(json.dumps(payload, indent=2) + "\n")
    stats = CategoryStats.from_json_dict(payload["stats"])
    click.echo(format_stats_text(stats, count_vacuous_correct(payload)))
    click.echo(f"wrote {output}")


def _parse_target(spec: str, record, detections: list[Detection]) -> tuple[str, Detection]:
    """Resolve --box into (token, target): '3' → prediction 3, 'gt:1' → gt box 1."""
    if spec.startswith("gt:"):
        idx = int(spec[3:])
        counted = record.counted_boxes()
        if not 0 <= idx < len(counted):
            raise ValueError(f"image {record.id!r} has no counted gt box {idx}")
        box = clamp_box(counted[idx].box, record.width, record.height)
        return f"gt-{idx}", Detection(box=box, objectness=1.0)
    idx = int(spec)
    if not 0 <= idx < len(detections):
        raise ValueError(f"image {record.id!r} has no prediction {idx}")
    det = detections[idx]
    return f"pred-{idx}", dataclasses.replace(
        det, box=clamp_box(det.box, record.width, record.height)
    )


@main.command("explain")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.argument("predictions", type=click.Path(exists=True, dir_okay=False))
@click.option("--image", "image_id", required=True, help="Manifest image id.")
@click.option("--box", "box_spec", required=True,
              help="Target box: a prediction index, or gt:<index> for a ground-truth box.")
@click.option("--detector", "detector_config", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--masks", default=DEFAULT_NUM_MASKS, show_default=True, type=int)
@click.option("--grid", default=DEFAULT_GRID_SIZE, show_default=True, type=int)
@click.option("--prob", default=DEFAULT_KEEP_PROBABILITY, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--fill", default="black", show_default=True,
              type=click.Choice(["black", "mean"]))
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@_friendly_errors
def explain_cmd(manifest, predictions, image_id, box_spec, detector_config,
                masks, grid, prob, seed, fill, output):
    """Compute a saliency map for one box of one image."""
    records = load_manifest(manifest)
    record = records.get(image_id)
    preds = load_predictions(predictions).get(image_id, [])
    token, target = _parse_target(box_spec, record, preds)
    spec = MaskSpec(grid_size=grid, keep_probability=prob, num_masks=masks,
                    seed=seed, fill=fill)
    image = load_image(record.path)
    adapter = create_adapter(load_detector_config(detector_config))
    try:
        smap = explain(image, target, adapter, spec, image_id)
    finally:
        adapter.close()
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = out_dir / f"{image_id}_{token}"
    save_image(render_overlay(image, smap), base.with_suffix(".png"))
    write_raw(smap, base.with_suffix(".f32"))
    write_sidecar(smap, base.with_suffix(".json"))
    click.echo(f"explained {image_id} {token} with {masks} masks "
               f"({smap.skipped_samples} skipped); wrote {base}.png/.f32/.json")
    if smap.skip_flagged:
        click.echo("warning: more than 1% of perturbation samples were skipped", err=True)


@main.command("run")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--detector", "detector_config", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--explain-k", default=5, show_default=True, type=int,
              help="Explanation budget per failure category.")
@click.option("--masks", default=DEFAULT_NUM_MASKS, show_default=True, type=int)
@click.option("--grid", default=DEFAULT_GRID_SIZE, show_default=True, type=int)
@click.option("--prob", default=DEFAULT_KEEP_PROBABILITY, show_default=True, type=float)
@click.option("--mask-seed", default=0, show_default=True, type=int)
@click.option("--no-sample", is_flag=True, help="Evaluate the full manifest, unsampled.")
@_RUNS_OPTION
@_friendly_errors
def run_cmd(manifest_path, detector_config, seed, explain_k, masks, grid, prob,
            mask_seed, no_sample, runs_root):
    """Execute the full debugging pipeline as a persisted run."""
    config = RunConfig(
        manifest_path=str(Path(manifest_path).resolve()),
        detector=load_detector_config(detector_config),
        seed=seed,
        explain_k=explain_k,
        mask_spec=MaskSpec(grid_size=grid, keep_probability=prob,
                           num_masks=masks, seed=mask_seed),
        sample=not no_sample,
    )
    record = run_debug(config, runs_root)
    click.echo(f"run {record.run_id}: {record.status}")
    if record.status != "completed":
        raise click.ClickException(record.error or "run failed")
    categories = load_categories(run_dir(runs_root, record.run_id) / "categories.json")
    stats = CategoryStats.from_json_dict(categories["stats"])
    click.echo(format_stats_text(stats, count_vacuous_correct(categories)))
    click.echo(f"{len(record.explanations)} explanations rendered")


@main.command("remediate")
@click.argument("run_id")
@click.option("--action", required=True, type=click.Choice(["relabel", "pad"]))
@click.option("--top", default=0, show_default=True, type=int)
@click.option("--left", default=0, show_default=True, type=int)
@click.option("--right", default=0, show_default=True, type=int)
@click.option("--bottom", default=0, show_default=True, type=int)
@click.option("--note", default="", help="Free-form note stored with the plan.")
@_RUNS_OPTION
@_friendly_errors
def remediate_cmd(run_id, action, top, left, right, bottom, note, runs_root):
    """Apply a dataset fix to a run and re-evaluate as a child run."""
    padding = Padding(top=top, left=left, right=right, bottom=bottom) if action == "pad" else None
    plan = RemediationPlan(run_id=run_id, action=action, padding=padding, note=note)
    child = apply_remediation(plan, runs_root)
    click.echo(f"child run {child.run_id}: {child.status}")
    if child.status != "completed":
        raise click.ClickException(child.error or "child run failed")
    click.echo(f"compare with: detlens compare {run_id} {child.run_id}")


@main.command("compare")
@click.argument("base_run")
@click.argument("target_run")
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Also write the comparison as JSON.")
@_RUNS_OPTION
@_friendly_errors
def compare_cmd(base_run, target_run, output, runs_root):
    """Compare two runs' category tables, marking the better side per row."""
    comparison = compare_runs(runs_root, base_run, target_run)
    click.echo(format_comparison_text(comparison.table))
    if comparison.transitions:
        click.echo(f"\n{len(comparison.transitions)} image(s) changed category:")
        for t in comparison.transitions:
            click.echo(f"  {t['id']}: {t['base_category']} -> {t['target_category']}")
    else:
        click.echo("\nNo image changed category.")
    if output:
        Path(output).write_text(json.dumps(comparison.to_json_dict(), indent=2) + "\n")
        click.echo(f"wrote {output}")


@main.command("verify")
@click.argument("run_id")
@_RUNS_OPTION
@_friendly_errors
def verify_cmd(run_id, runs_root):
    """Check a run directory's artifacts for integrity."""
    problems = verify_run(runs_root, run_id)
    if problems:
        for problem in problems:
            click.echo(f"FAIL {problem}")
        raise click.ClickException(f"{len(problems)} problem(s) found")
    click.echo(f"run {run_id}: all artifacts verified")


@main.command("report")
@click.argument("run_id")
@click.option("--against", "target_run",
              help="Also render a comparison against this run.")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@_RUNS_OPTION
@_friendly_errors
def report_cmd(run_id, target_run, output, runs_root):
    """Render a run's statistics as CSV, text, and chart figures."""
    written = report_run(runs_root, run_id, output)
    if target_run:
        comparison = compare_runs(runs_root, run_id, target_run)
        written += report_comparison(
            comparison.to_json_dict(), output, label=f"{run_id} vs {target_run}"
        )
    for path in written:
        click.echo(f"wrote {path}")


@main.command("synth")
@click.option("--count", default=synth.DEFAULT_COUNT, show_default=True, type=int)
@click.option("--seed", default=synth.DEFAULT_LAYOUT_SEED, show_default=True, type=int)
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@_friendly_errors
def synth_cmd(count, seed, output):
    """Generate the bundled synthetic demo dataset and mock detector."""
    paths = synth.generate_fixture(output, count=count, seed=seed)
    click.echo(f"wrote {count} images under {paths.images_dir}")
    click.echo(f"manifest: {paths.manifest}")
    click.echo(f"detector config: {paths.detector_config}")


@main.command("serve")
@click.option("--bind", default="127.0.0.1:7878", show_default=True,
              help="host:port to listen on.")
@_RUNS_OPTION
@_friendly_errors
def serve_cmd(bind, runs_root):
    """Serve the HTTP API and review UI over a runs directory."""
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.ClickException(f"--bind must look like host:port, got {bind!r}")

    import uvicorn

    from .service import create_app

    app = create_app(runs_root)
    uvicorn.run(app, host=host, port=int(port_text))


if __name__ == "__main__":
    main()
