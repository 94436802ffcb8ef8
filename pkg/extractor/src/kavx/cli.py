"""Command-line corpus tools over image directories with a label manifest.

Exit codes mirror the core pipeline: 0 success, 2 usage, 3 format, 4 I/O.
Models are torch.save()d modules; their classes must be importable at
load time (the bundled toy networks qualify).
"""

from __future__ import annotations

import functools
import os
import sys

import click
import numpy as np
import torch

from kavguard.errors import FormatError, UsageError

from . import corrupt, datasets
from .extract import ExtractionConfig, extract_kav, probe_dim
from .perturb import perturb

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_IO = 4


def guarded(fn):
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


def _load_model(path) -> torch.nn.Module:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"model file not found: {path}")
    model = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(model, torch.nn.Module):
        raise UsageError(f"{path} does not contain a torch module")
    model.eval()
    return model


def _load_corpus(data_dir, manifest_path):
    if not os.path.isdir(data_dir):
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    if not os.path.isfile(manifest_path):
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    return datasets.read_manifest(manifest_path)


def _parse_csv_list(raw, kind, convert):
    values = [item.strip() for item in raw.split(",") if item.strip()]
    if not values:
        raise UsageError(f"--{kind} is empty")
    try:
        return [convert(v) for v in values]
    except ValueError:
        raise UsageError(f"--{kind} has a malformed entry in {raw!r}")


@click.group()
def main():
    """Bridge trained torch classifiers to activation-vector files."""


@main.command("extract")
@click.option("--model", "model_path", required=True, help="torch.save()d module.")
@click.option("--data", "data_dir", required=True, help="Image directory.")
@click.option("--manifest", "manifest_path", required=True,
              help="CSV `path,label` relative to --data.")
@click.option("--layers", required=True,
              help="Comma-separated module names whose channel means contribute.")
@click.option("--penultimate", "penultimate_layer", default=None,
              help="Module whose features are appended whole.")
@click.option("--output", "output_path", required=True, help="KAV file to write.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Unused by extraction (deterministic); kept for symmetry.")
@guarded
def cmd_extract(model_path, data_dir, manifest_path, layers, penultimate_layer,
                output_path, seed):
    """Extract one activation record per manifest image."""
    model = _load_model(model_path)
    rows = _load_corpus(data_dir, manifest_path)
    if not rows:
        raise UsageError("manifest lists no images")
    config = ExtractionConfig(
        layers=tuple(_parse_csv_list(layers, "layers", str)),
        include_penultimate=penultimate_layer is not None,
        penultimate_layer=penultimate_layer,
        seed=seed,
        output=output_path)
    first_image, _ = next(datasets.iter_images(data_dir, rows[:1]))
    click.echo(f"kav dim: {probe_dim(model, config, first_image)}")
    dataset = extract_kav(model, datasets.iter_images(data_dir, rows), config)
    click.echo(f"extract: {len(dataset)} records, dim {dataset.dim}, "
               f"{dataset.num_classes} classes -> {output_path}")


@main.command("perturb-set")
@click.option("--model", "model_path", required=True, help="torch.save()d module.")
@click.option("--data", "data_dir", required=True, help="Image directory.")
@click.option("--manifest", "manifest_path", required=True,
              help="CSV `path,label` relative to --data.")
@click.option("--epsilon", type=float, required=True,
              help="Per-pixel step along the gradient sign.")
@click.option("--output-dir", "output_dir", required=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Unused by the deterministic gradient step; kept for symmetry.")
@guarded
def cmd_perturb_set(model_path, data_dir, manifest_path, epsilon, output_dir,
                    seed):
    """Write a gradient-sign-perturbed copy of every manifest image."""
    model = _load_model(model_path)
    rows = _load_corpus(data_dir, manifest_path)
    os.makedirs(output_dir, exist_ok=True)
    for rel_path, label in rows:
        image = datasets.to_tensor(
            datasets.load_image(os.path.join(data_dir, rel_path)))
        stepped = perturb(model, image, epsilon)
        array = stepped.numpy()
        array = array[0] if array.shape[0] == 1 else array.transpose(1, 2, 0)
        datasets.save_image(array, os.path.join(output_dir, rel_path))
    datasets.write_manifest(rows, os.path.join(output_dir, "manifest.csv"))
    click.echo(f"perturb-set: {len(rows)} images -> {output_dir}")


@main.command("noise-set")
@click.option("--data", "data_dir", required=True, help="Image directory.")
@click.option("--manifest", "manifest_path", required=True,
              help="CSV `path,label` relative to --data.")
@click.option("--p", "probability", type=float, required=True,
              help="Per-pixel flip probability.")
@click.option("--output-dir", "output_dir", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@guarded
def cmd_noise_set(data_dir, manifest_path, probability, output_dir, seed):
    """Write a salt-and-pepper-degraded copy of every manifest image."""
    rows = _load_corpus(data_dir, manifest_path)
    os.makedirs(output_dir, exist_ok=True)
    seeds = np.random.default_rng(seed).integers(2 ** 63, size=len(rows))
    for (rel_path, label), image_seed in zip(rows, seeds):
        image = datasets.load_image(os.path.join(data_dir, rel_path))
        noisy = corrupt.salt_pepper(image, probability, int(image_seed))
        datasets.save_image(noisy, os.path.join(output_dir, rel_path))
    datasets.write_manifest(rows, os.path.join(output_dir, "manifest.csv"))
    click.echo(f"noise-set: {len(rows)} images at p={probability} -> {output_dir}")


@main.command("rotate-set")
@click.option("--data", "data_dir", required=True, help="Image directory.")
@click.option("--manifest", "manifest_path", required=True,
              help="CSV `path,label` relative to --data.")
@click.option("--angles", required=True,
              help="Comma-separated degrees, e.g. 0,15,30.")
@click.option("--output-dir", "output_dir", required=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Unused by deterministic rotation; kept for symmetry.")
@guarded
def cmd_rotate_set(data_dir, manifest_path, angles, output_dir, seed):
    """Write one rotated copy per angle for every manifest image."""
    parsed = _parse_csv_list(angles, "angles", float)
    rows = _load_corpus(data_dir, manifest_path)
    os.makedirs(output_dir, exist_ok=True)
    out_rows = []
    for rel_path, label in rows:
        image = datasets.load_image(os.path.join(data_dir, rel_path))
        stem, ext = os.path.splitext(rel_path)
        for angle, rotated in zip(parsed, corrupt.rotate_series(image, parsed)):
            out_path = f"{stem}_rot{angle:g}{ext}"
            datasets.save_image(rotated, os.path.join(output_dir, out_path))
            out_rows.append((out_path, label))
    datasets.write_manifest(out_rows, os.path.join(output_dir, "manifest.csv"))
    click.echo(f"rotate-set: {len(rows)} images x {len(parsed)} angles "
               f"-> {output_dir}")


if __name__ == "__main__":
    main()
