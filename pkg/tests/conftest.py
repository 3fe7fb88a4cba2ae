import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmrnn.grid import PatchGrid
from mmrnn.train import TrainConfig, init_model


def random_pair(seed, height, width, d_c=3, d_d=2, num_classes=3, unlabeled=0):
    """Seeded random grid pair with a shared label map and mask."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=(height, width))
    if unlabeled:
        flat = rng.choice(height * width, size=unlabeled, replace=False)
        labels.reshape(-1)[flat] = -1
    g_c = PatchGrid.create(rng.normal(size=(height, width, d_c)), labels, num_classes)
    g_d = PatchGrid.create(rng.normal(size=(height, width, d_d)), labels, num_classes)
    return g_c, g_d


def small_model(seed, d_c=3, d_d=2, d_h=4, num_classes=3):
    cfg = TrainConfig(hidden_dim=d_h)
    return init_model(cfg, (d_c, d_d, d_h, num_classes), seed)


def forge_labels(g: PatchGrid, labels: np.ndarray) -> PatchGrid:
    """Bypass validation to plant arbitrary labels under an unchanged mask.

    Lets tests verify that masked cells' labels are never read: legal
    grids always carry the sentinel there, so this is the only way to
    exercise the invariance.
    """
    forged = object.__new__(PatchGrid)
    object.__setattr__(forged, "features", g.features)
    object.__setattr__(forged, "labels", labels)
    object.__setattr__(forged, "valid", g.valid)
    object.__setattr__(forged, "num_classes", g.num_classes)
    return forged


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
