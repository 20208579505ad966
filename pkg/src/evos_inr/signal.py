"""Natural signals as (coordinate, attribute) pairs over regular grids.

Images are rank-2 grids, audio is rank-1. Attributes are normalized to
[0, 1] and coordinates are per-axis linspaces over [-1, 1]. Flattening is
row-major everywhere so Laplacian stencils, fitness caches and selector
indices all agree on what index ``i`` means.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class SignalError(ValueError):
    """Raised for unreadable or unsupported signal sources."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class GridSpec:
    extents: tuple[int, ...]
    channels: int

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        if self.rank not in (1, 2):
            raise SignalError(f"grid rank must be 1 or 2, got {self.rank}")
        if any(e < 1 for e in self.extents):
            raise SignalError(f"extents must be positive, got {self.extents}")
        if self.channels < 1:
            raise SignalError("channel count must be positive")

    @property
    def rank(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    @property
    def shape(self) -> tuple[int, ...]:
        """Array shape of a field on this grid: extents plus channel axis."""
        return (*self.extents, self.channels)


def flat_index_to_position(grid: GridSpec, i: int) -> tuple[int, ...]:
    if not 0 <= i < grid.size:
        raise IndexError(f"flat index {i} outside [0, {grid.size})")
    return tuple(int(p) for p in np.unravel_index(i, grid.extents))


def position_to_flat_index(grid: GridSpec, position) -> int:
    return int(np.ravel_multi_index(tuple(position), grid.extents))


def grid_coordinates(extents) -> np.ndarray:
    """N x rank matrix of linspace coordinates in row-major order."""
    axes = [np.linspace(-1.0, 1.0, e) for e in extents]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class Signal:
    grid: GridSpec
    coords: np.ndarray
    attrs: np.ndarray
    name: str = field(default="signal", compare=False)
    sample_rate: int | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.grid.size
        if self.coords.shape != (n, self.grid.rank):
            raise SignalError(f"coords shape {self.coords.shape} does not match grid")
        if self.attrs.shape != (n, self.grid.channels):
            raise SignalError(f"attrs shape {self.attrs.shape} does not match grid")
        self.coords.setflags(write=False)
        self.attrs.setflags(write=False)

    @property
    def size(self) -> int:
        return self.grid.size

    @classmethod
    def from_array(cls, values: np.ndarray, rank: int, name: str = "signal",
                   sample_rate: int | None = None) -> "Signal":
        """Build a signal from an already-normalized array.

        ``values`` has shape ``extents`` (single channel) or
        ``extents + (n,)``.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == rank:
            values = values[..., None]
        grid = GridSpec(values.shape[:-1], values.shape[-1])
        coords = grid_coordinates(grid.extents)
        attrs = values.reshape(grid.size, grid.channels).copy()
        return cls(grid, coords, attrs, name=name, sample_rate=sample_rate)

    def field(self) -> np.ndarray:
        """Attributes reshaped onto the grid (extents..., channels)."""
        return self.attrs.reshape(self.grid.shape)


def _center_crop(arr: np.ndarray, crop) -> np.ndarray:
    h, w = arr.shape[:2]
    ch, cw = crop
    if ch > h or cw > w:
        raise SignalError(f"crop {crop} larger than image {h}x{w}")
    top = (h - ch) // 2
    left = (w - cw) // 2
    return arr[top:top + ch, left:left + cw]


def load_image(path, center_crop: tuple[int, int] | None = None) -> Signal:
    """Load an 8-bit grayscale or RGB image (PNG/BMP) as a rank-2 signal."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.asarray(img)
    except (OSError, ValueError) as exc:
        raise SignalError(f"cannot read image {path}: {exc}") from exc
    if mode not in ("L", "RGB") or arr.dtype != np.uint8:
        raise SignalError(
            f"{path}: unsupported image mode {mode!r}; expected 8-bit L or RGB"
        )
    if center_crop is not None:
        arr = _center_crop(arr, center_crop)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    grid = GridSpec(arr.shape[:2], arr.shape[2])
    attrs = arr.reshape(grid.size, grid.channels).astype(np.float64) / 255.0
    return Signal(grid, grid_coordinates(grid.extents), attrs, name=path.stem)


def load_audio(path, seconds: float | None = None, sample_rate: int | None = None) -> Signal:
    """Load a 16-bit PCM mono WAV as a rank-1 signal.

    Amplitudes in native [-1, 1] are mapped to [0, 1] by ``(a + 1) / 2``.
    Only the first ``seconds * sample_rate`` samples are kept. No
    resampling is done, so ``sample_rate`` must match the file.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except (OSError, wave.Error, EOFError) as exc:
        raise SignalError(f"cannot read audio {path}: {exc}") from exc
    if channels != 1:
        raise SignalError(f"{path}: expected mono audio, got {channels} channels")
    if width != 2:
        raise SignalError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if sample_rate is not None and sample_rate != rate:
        raise SignalError(f"{path}: sample rate {rate} Hz, requested {sample_rate} Hz")
    samples = np.frombuffer(frames, dtype="<i2")
    if seconds is not None:
        count = round_half_up(seconds * rate)
        if samples.size < count:
            raise SignalError(
                f"{path}: {samples.size} samples, {seconds} s at {rate} Hz needs {count}"
            )
        samples = samples[:count]
    amplitude = samples.astype(np.float64) / 32768.0
    return Signal.from_array((amplitude + 1.0) / 2.0, rank=1, name=path.stem, sample_rate=rate)


def waveform_signal(amplitude: np.ndarray, sample_rate: int | None = None) -> Signal:
    """Rank-1 signal from a native [-1, 1] waveform."""
    amplitude = np.asarray(amplitude, dtype=np.float64)
    return Signal.from_array((amplitude + 1.0) / 2.0, rank=1, name="audio",
                             sample_rate=sample_rate)


def save_image(path, grid: GridSpec, values: np.ndarray) -> None:
    arr = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0).reshape(grid.shape)
    arr = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    if grid.channels == 1:
        arr = arr[:, :, 0]
    elif grid.channels != 3:
        raise SignalError(f"cannot write a {grid.channels}-channel image")
    Image.fromarray(arr).save(path)


def save_audio(path, values: np.ndarray, sample_rate: int) -> None:
    amplitude = 2.0 * np.clip(np.asarray(values, dtype=np.float64).ravel(), 0.0, 1.0) - 1.0
    pcm = np.clip(np.floor(amplitude * 32768.0 + 0.5), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def save_reconstruction(path, signal: Signal, values: np.ndarray, sample_rate: int = 16000) -> Path:
    """Write a reconstruction as PNG (images) or WAV (audio); returns the path used."""
    path = Path(path)
    if signal.grid.rank == 2:
        path = path.with_suffix(".png")
        save_image(path, signal.grid, values)
    else:
        path = path.with_suffix(".wav")
        save_audio(path, values, sample_rate)
    return path
