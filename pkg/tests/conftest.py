import wave

import numpy as np
import pytest
from PIL import Image

from evos_inr.signal import Signal


def camera_array(size: int = 256) -> np.ndarray:
    """Cameraman test image, box-downsampled from 512x512 to ``size``."""
    from skimage import data

    img = data.camera().astype(np.float64)
    f = img.shape[0] // size
    small = img.reshape(size, f, size, f).mean(axis=(1, 3))
    return np.floor(small + 0.5).astype(np.uint8)


def write_wav(path, samples: np.ndarray, rate: int) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(np.asarray(samples, dtype="<i2").tobytes())


@pytest.fixture(scope="session")
def camera_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("img") / "camera256.png"
    Image.fromarray(camera_array(256)).save(path)
    return path


@pytest.fixture(scope="session")
def small_image_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("img") / "camera32.png"
    Image.fromarray(camera_array(32)).save(path)
    return path


@pytest.fixture(scope="session")
def sine_wav_path(tmp_path_factory):
    rate = 4000
    t = np.arange(rate // 2) / rate
    wave_ = 0.4 * np.sin(2 * np.pi * 220 * t) + 0.2 * np.sin(2 * np.pi * 470 * t)
    path = tmp_path_factory.mktemp("wav") / "sine.wav"
    write_wav(path, np.round(wave_ * 32767), rate)
    return path


@pytest.fixture
def tiny_signal():
    rng = np.random.default_rng(7)
    return Signal.from_array(rng.random((12, 12)), rank=2, name="tiny")


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[num])
