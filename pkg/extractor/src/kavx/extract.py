"""Forward-hook activation extraction into kavguard files.

The activation vector of one input is the concatenation of channel-wise
mean activations of the selected blocks, optionally followed by the
features of a named penultimate layer. Its length is a pure function of
the architecture and the configuration, so it can be reported before any
corpus is processed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import torch

from kavguard.errors import UsageError
from kavguard.store import KavDataset, KavRecord, write_kav

CHANNEL_MEAN = "channel_mean"


@dataclass(frozen=True)
class ExtractionConfig:
    """Which activations make up the vector, and where the file goes."""

    layers: tuple[str, ...]
    include_penultimate: bool = False
    penultimate_layer: str | None = None
    pooling: str = CHANNEL_MEAN
    epsilon: float = 0.0
    seed: int = 0
    output: str | None = None

    def tapped_layers(self) -> tuple[str, ...]:
        names = tuple(self.layers)
        if self.include_penultimate:
            if not self.penultimate_layer:
                raise UsageError(
                    "include_penultimate requires penultimate_layer to be named")
            names = names + (self.penultimate_layer,)
        if not names:
            raise UsageError("no layers selected")
        if self.pooling != CHANNEL_MEAN:
            raise UsageError(f"unsupported pooling mode {self.pooling!r}")
        return names


def _pooled(activation: torch.Tensor) -> torch.Tensor:
    """Channel-mean summary: (N,C,*spatial) -> (N,C); (N,F) passes through."""
    if activation.dim() <= 2:
        return activation
    return activation.mean(dim=tuple(range(2, activation.dim())))


class _Taps:
    """Forward hooks on the named modules, collecting pooled outputs."""

    def __init__(self, model: torch.nn.Module, names: tuple[str, ...]):
        modules = dict(model.named_modules())
        missing = [n for n in names if n not in modules]
        if missing:
            raise UsageError(
                f"layers not found in model: {missing}; "
                f"available: {sorted(n for n in modules if n)}")
        self.names = names
        self.outputs: dict[str, torch.Tensor] = {}
        self.handles = [
            modules[name].register_forward_hook(self._saver(name))
            for name in names
        ]

    def _saver(self, name):
        def hook(_module, _inputs, output):
            self.outputs[name] = _pooled(output.detach())
        return hook

    def collect(self) -> torch.Tensor:
        pieces = [self.outputs[name] for name in self.names]
        self.outputs = {}
        return torch.cat(pieces, dim=1)

    def remove(self) -> None:
        for handle in self.handles:
            handle.remove()


def _check_eval_mode(model: torch.nn.Module) -> None:
    if model.training:
        raise UsageError("model must be in evaluation mode (call model.eval())")


def _forward(model, taps, image: torch.Tensor):
    x = torch.as_tensor(image, dtype=torch.float32)
    if x.dim() == 2:
        x = x.unsqueeze(0)
    if x.dim() != 3:
        raise UsageError(f"expected a (C,H,W) image, got shape {tuple(x.shape)}")
    try:
        with torch.no_grad():
            logits = model(x.unsqueeze(0))
    except RuntimeError as exc:
        raise UsageError(
            f"incompatible image shape {tuple(x.shape)}: {exc}") from exc
    return logits[0], taps.collect()[0]


def probe_dim(model: torch.nn.Module, config: ExtractionConfig,
              sample_image) -> int:
    """Activation-vector length this configuration will produce."""
    _check_eval_mode(model)
    taps = _Taps(model, config.tapped_layers())
    try:
        _, kav = _forward(model, taps, sample_image)
    finally:
        taps.remove()
    return int(kav.shape[0])


def extract_kav(model: torch.nn.Module, images: Iterable,
                config: ExtractionConfig) -> KavDataset:
    """Extract one record per image; write the file when config.output is set.

    ``images`` yields either plain (C,H,W) tensors/arrays or
    (image, label) pairs; missing labels become -1. Records carry the
    network logits and appear in input order.
    """
    _check_eval_mode(model)
    taps = _Taps(model, config.tapped_layers())
    records: list[KavRecord] = []
    dim = None
    num_classes = None
    try:
        for index, item in enumerate(images):
            if isinstance(item, tuple):
                image, label = item
            else:
                image, label = item, None
            logits, kav = _forward(model, taps, image)
            if dim is None:
                dim = int(kav.shape[0])
                num_classes = int(logits.shape[0])
            elif int(kav.shape[0]) != dim:
                raise UsageError(
                    f"image {index}: kav length {int(kav.shape[0])} != {dim}")
            records.append(KavRecord(
                record_index=index,
                label=-1 if label is None else int(label),
                kav=kav.numpy().astype(np.float32),
                logits=logits.numpy().astype(np.float32)))
    finally:
        taps.remove()
    if dim is None:
        raise UsageError("no images to extract")
    dataset = KavDataset(dim=dim, num_classes=num_classes, has_logits=True,
                         records=records)
    if config.output is not None:
        write_kav(dataset, config.output)
    return dataset
