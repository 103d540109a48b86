import shutil
import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).resolve().parent
DATA_DIR = TESTS_DIR / "data"
PHOTO_DIR = DATA_DIR / "photos"
CANNY_DIR = DATA_DIR / "canny"

sys.path.insert(0, str(TESTS_DIR))  # makes `oracles` importable


def photo_paths():
    paths = sorted(PHOTO_DIR.glob("*.png"))
    assert len(paths) == 20, "expected the 20 committed test photos"
    return paths


@pytest.fixture(scope="session")
def photos():
    return photo_paths()


def _copy_split(paths, root, name, indices):
    d = root / name
    d.mkdir()
    for i in indices:
        shutil.copy(paths[i], d)
    return d


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """The 20-image split used by the training tests: 10 train / 5 val / 5 test."""
    root = tmp_path_factory.mktemp("corpus")
    paths = photo_paths()
    return {
        "train": _copy_split(paths, root, "train", range(0, 10)),
        "val": _copy_split(paths, root, "val", range(10, 15)),
        "test": _copy_split(paths, root, "test", range(15, 20)),
    }


@pytest.fixture(scope="session")
def corpus3(tmp_path_factory):
    """A 3-image directory for shape/pipeline checks."""
    root = tmp_path_factory.mktemp("corpus3")
    paths = photo_paths()
    for i in (0, 7, 16):
        shutil.copy(paths[i], root)
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def load_y(path):
    from edgesr.images import load_png, rgb_to_ycbcr

    y, _, _ = rgb_to_ycbcr(load_png(path))
    return y
