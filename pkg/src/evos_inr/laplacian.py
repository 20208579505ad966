"""Discrete Laplacian filtering on signal grids, and its exact adjoint.

Fields are ``(N, n)`` arrays laid out row-major over a :class:`GridSpec`.
The filter is a 3-point (1D) or 4/8-neighbour (2D) stencil applied per
channel. Boundaries use replicate padding by default so that constant
fields map to exactly zero, borders included; zero padding is available
for comparison.
"""

from __future__ import annotations

import numpy as np

from .signal import GridSpec

KERNELS = {
    (1, 4): np.array([1.0, -2.0, 1.0]),
    # 1D has a single nearest-neighbour stencil
    (1, 8): np.array([1.0, -2.0, 1.0]),
    (2, 4): np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]),
    (2, 8): np.array([[1.0, 1.0, 1.0], [1.0, -8.0, 1.0], [1.0, 1.0, 1.0]]),
}
PADDINGS = ("replicate", "zero")


def stencil(rank: int, kernel: int = 4) -> np.ndarray:
    try:
        return KERNELS[(rank, int(kernel))]
    except KeyError:
        raise ValueError(f"no {kernel}-neighbour Laplacian for rank {rank}") from None


def _taps(rank: int, kernel: int):
    """Nonzero (offset, coefficient) pairs of the stencil."""
    k = stencil(rank, kernel)
    return [(tuple(i - 1 for i in idx), float(c)) for idx, c in np.ndenumerate(k) if c != 0.0]


def _as_grid(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    values = np.asarray(values)
    if values.shape != (grid.size, grid.channels):
        raise ValueError(
            f"field shape {values.shape} does not match grid {(grid.size, grid.channels)}"
        )
    if any(e < 3 for e in grid.extents):
        raise ValueError(f"Laplacian needs every extent >= 3, got {grid.extents}")
    return values.reshape(grid.shape)


def _check_padding(padding: str) -> None:
    if padding not in PADDINGS:
        raise ValueError(f"padding must be one of {PADDINGS}, got {padding!r}")


def laplacian(values: np.ndarray, grid: GridSpec, kernel: int = 4,
              padding: str = "replicate") -> np.ndarray:
    """Apply the discrete Laplacian to a field; returns an ``(N, n)`` array."""
    _check_padding(padding)
    u = _as_grid(values, grid)
    pad = [(1, 1)] * grid.rank + [(0, 0)]
    if padding == "replicate":
        p = np.pad(u, pad, mode="edge")
    else:
        p = np.pad(u, pad, mode="constant")
    out = np.zeros_like(u)
    ext = grid.extents
    # sum of c * (neighbour - centre): the stencil sums to zero, and this
    # form keeps constants at exactly zero where c*x summation would round
    for offset, c in _taps(grid.rank, kernel):
        if any(offset):
            sl = tuple(slice(1 + d, 1 + d + e) for d, e in zip(offset, ext))
            out += c * (p[sl] - u)
    return out.reshape(grid.size, grid.channels)


def laplacian_adjoint(values: np.ndarray, grid: GridSpec, kernel: int = 4,
                      padding: str = "replicate") -> np.ndarray:
    """Transpose of :func:`laplacian` under the same kernel and padding."""
    _check_padding(padding)
    v = _as_grid(values, grid)
    ext = grid.extents
    g = np.zeros(tuple(e + 2 for e in ext) + (grid.channels,), dtype=v.dtype)
    for offset, c in _taps(grid.rank, kernel):
        sl = tuple(slice(1 + d, 1 + d + e) for d, e in zip(offset, ext))
        g[sl] += c * v
    if padding == "replicate":
        # fold the halo back onto the edge cells it was copied from
        for axis in range(grid.rank):
            lead = [slice(None)] * (grid.rank + 1)
            src, dst = list(lead), list(lead)
            src[axis], dst[axis] = 0, 1
            g[tuple(dst)] += g[tuple(src)]
            src[axis], dst[axis] = -1, -2
            g[tuple(dst)] += g[tuple(src)]
    inner = tuple(slice(1, -1) for _ in ext)
    return np.ascontiguousarray(g[inner]).reshape(grid.size, grid.channels)


def laplacian_matrix(grid: GridSpec, kernel: int = 4, padding: str = "replicate") -> np.ndarray:
    """Dense single-channel filter matrix, by probing with unit impulses.

    Quadratic in N; meant for small grids and tests.
    """
    single = GridSpec(grid.extents, 1)
    n = single.size
    mat = np.zeros((n, n))
    for j in range(n):
        e = np.zeros((n, 1))
        e[j] = 1.0
        mat[:, j] = laplacian(e, single, kernel, padding)[:, 0]
    return mat


def high_freq_residual(pred: np.ndarray, truth: np.ndarray, grid: GridSpec,
                       kernel: int = 4, padding: str = "replicate") -> np.ndarray:
    """Per-coordinate squared Laplacian residual, summed over channels."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    r = laplacian(pred, grid, kernel, padding) - laplacian(truth, grid, kernel, padding)
    return np.einsum("ij,ij->i", r, r)
