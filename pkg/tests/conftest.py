"""Shared fixtures and synthetic-pair helpers."""

import numpy as np
import pytest

from branchdepth.geometry import StereoRig


@pytest.fixture
def rig() -> StereoRig:
    """Rig used by the spec's worked examples: w = 50 metre-pixels."""
    return StereoRig(fx=500.0, fy=500.0, ox=320.0, oy=240.0, baseline_m=0.1)


def random_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """8-bit-valued random image as float64 (costs stay exactly representable)."""
    return rng.integers(0, 256, size=(height, width)).astype(np.float64)


def shifted_pair(
    rng: np.random.Generator, height: int, width: int, shift: int
) -> tuple[np.ndarray, np.ndarray]:
    """Pair whose true disparity is exactly ``shift`` everywhere.

    Both images are crops of one wider random texture, so that
    right(x - shift) == left(x) holds exactly for every x >= shift.
    """
    base = random_image(rng, height, width + shift)
    return base[:, :width].copy(), base[:, shift : shift + width].copy()
