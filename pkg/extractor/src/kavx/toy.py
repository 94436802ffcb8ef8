"""Small reference networks for demos and tests."""

from __future__ import annotations

import torch
from torch import nn


class TinyConvNet(nn.Module):
    """Two conv blocks (4 and 8 channels) over any input size, a 16-wide
    hidden layer, and a linear classifier. Selecting conv1+conv2 yields a
    12-dimensional activation vector; adding fc1 as the penultimate layer
    makes it 28."""

    def __init__(self, in_channels: int = 1, num_classes: int = 3):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, 4, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(4, 8, kernel_size=3, padding=1)
        self.pool = nn.AdaptiveAvgPool2d(2)
        self.fc1 = nn.Linear(8 * 2 * 2, 16)
        self.fc2 = nn.Linear(16, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        x = self.pool(x).flatten(1)
        x = torch.relu(self.fc1(x))
        return self.fc2(x)
