import pytest
import torch

from kavx.toy import TinyConvNet


@pytest.fixture
def toy_model():
    torch.manual_seed(7)
    return TinyConvNet(in_channels=1, num_classes=3).eval()
