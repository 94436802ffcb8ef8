"""Image-directory datasets with a `path,label` manifest CSV."""

from __future__ import annotations

import csv
import os
from typing import Iterator

import numpy as np
import torch
from PIL import Image

from kavguard.errors import FormatError


def read_manifest(path) -> list[tuple[str, int]]:
    """Rows of the manifest: relative image path and integer label
    (-1 = unlabeled)."""
    with open(path, "r", newline="") as stream:
        rows = csv.reader(stream)
        try:
            header = next(rows)
        except StopIteration:
            raise FormatError("empty manifest: missing header row") from None
        if header != ["path", "label"]:
            raise FormatError(
                f"line 1: expected header 'path,label', got {header!r}")
        out = []
        for lineno, row in enumerate(rows, start=2):
            if len(row) != 2:
                raise FormatError(
                    f"line {lineno}: expected 2 values, got {len(row)}")
            try:
                out.append((row[0], int(row[1])))
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
        return out


def write_manifest(rows, path) -> None:
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["path", "label"])
        for rel_path, label in rows:
            writer.writerow([rel_path, label])


def load_image(path) -> np.ndarray:
    """Float image in [0, 1]: (H,W) for grayscale, (H,W,3) otherwise."""
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.float32)
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def save_image(array: np.ndarray, path) -> None:
    clipped = np.clip(np.asarray(array, dtype=np.float64), 0.0, 1.0)
    data = np.round(clipped * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def to_tensor(array: np.ndarray) -> torch.Tensor:
    """(H,W) or (H,W,C) float image to a (C,H,W) float32 tensor."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    elif arr.ndim == 3:
        arr = arr.transpose(2, 0, 1)
    else:
        raise FormatError(f"expected a 2-D or 3-D image, got shape {arr.shape}")
    return torch.from_numpy(arr.copy())


def iter_images(data_dir, manifest_rows) -> Iterator[tuple[torch.Tensor, int]]:
    for rel_path, label in manifest_rows:
        yield to_tensor(load_image(os.path.join(data_dir, rel_path))), label
