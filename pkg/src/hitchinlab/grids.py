"""Grid utilities: log-spaced radial grids and non-uniform finite differences.

The 3-point stencils below are exact on quadratics for arbitrary node
spacing; on smoothly graded (e.g. log-spaced) grids they are second-order
accurate.  The same stencils are used by the solvers and by the residual
checks, so a converged solve has a matching discrete residual by
construction.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "log_grid",
    "fd_first",
    "fd_second",
    "fd_first_boundary",
    "cumulative_from_right",
]


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if not (0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    if n < 2:
        raise ValueError("need at least two nodes")
    return np.geomspace(lo, hi, n)


def _spacings(x: np.ndarray):
    h = np.diff(x)
    if np.any(h <= 0):
        raise ValueError("grid must be strictly increasing")
    return h[:-1], h[1:]  # h_left[i] = x[i+1]-x[i] ... aligned to interior nodes


def fd_first(x: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    """First derivative, interior central, one-sided 3-point at the ends."""
    x = np.asarray(x, dtype=float)
    y = np.moveaxis(np.asarray(y), axis, -1)
    hl, hr = _spacings(x)
    out = np.empty_like(y)
    out[..., 1:-1] = (
        -hr / (hl * (hl + hr)) * y[..., :-2]
        + (hr - hl) / (hl * hr) * y[..., 1:-1]
        + hl / (hr * (hl + hr)) * y[..., 2:]
    )
    out[..., 0] = _one_sided(x[0], x[1], x[2], y[..., 0], y[..., 1], y[..., 2])
    out[..., -1] = _one_sided(x[-1], x[-2], x[-3], y[..., -1], y[..., -2], y[..., -3])
    return np.moveaxis(out, -1, axis)


def _one_sided(x0, x1, x2, y0, y1, y2):
    # derivative at x0 from nodes (x0, x1, x2)
    a, b = x1 - x0, x2 - x0
    w0 = -(a + b) / (a * b)
    w1 = b / (a * (b - a))
    w2 = -a / (b * (b - a))
    return w0 * y0 + w1 * y1 + w2 * y2


def fd_first_boundary(x: np.ndarray, side: str):
    """One-sided 3-point first-derivative weights at an endpoint.

    Returns (indices, weights) into the full grid.
    """
    x = np.asarray(x, dtype=float)
    if side == "left":
        i0, i1, i2 = 0, 1, 2
    elif side == "right":
        i0, i1, i2 = len(x) - 1, len(x) - 2, len(x) - 3
    else:
        raise ValueError("side must be 'left' or 'right'")
    a, b = x[i1] - x[i0], x[i2] - x[i0]
    w0 = -(a + b) / (a * b)
    w1 = b / (a * (b - a))
    w2 = -a / (b * (b - a))
    return (i0, i1, i2), (w0, w1, w2)


def fd_second(x: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    """Second derivative at interior nodes; endpoints copy their neighbours.

    Endpoint values are placeholders only; every consumer restricts to
    interior nodes.
    """
    x = np.asarray(x, dtype=float)
    y = np.moveaxis(np.asarray(y), axis, -1)
    hl, hr = _spacings(x)
    out = np.empty_like(y)
    out[..., 1:-1] = (
        2.0 / (hl * (hl + hr)) * y[..., :-2]
        - 2.0 / (hl * hr) * y[..., 1:-1]
        + 2.0 / (hr * (hl + hr)) * y[..., 2:]
    )
    out[..., 0] = out[..., 1]
    out[..., -1] = out[..., -2]
    return np.moveaxis(out, -1, axis)


def cumulative_from_right(x: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    """Trapezoid cumulative integral C(x_i) = int_{x_i}^{x_N} y dx."""
    x = np.asarray(x, dtype=float)
    y = np.moveaxis(np.asarray(y), axis, -1)
    seg = 0.5 * np.diff(x) * (y[..., :-1] + y[..., 1:])
    out = np.zeros_like(y)
    out[..., :-1] = seg[..., ::-1].cumsum(axis=-1)[..., ::-1]
    return np.moveaxis(out, -1, axis)
