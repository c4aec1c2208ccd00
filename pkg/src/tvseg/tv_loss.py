"""Spatial smoothness losses on classifier probability maps.

A spatial loss scores the 3x3 neighborhood of a pixel in the output
probability map and exposes the per-neighbor coefficients needed to
backpropagate that score through the classifier.  The total-variation
instance penalizes the L1 norm of the Sobel gradient of each class
channel, which pushes training toward piecewise constant maps.

Neighborhood convention: the nine values of a window are ordered
row-major, top-left to bottom-right, matching the vectorized Sobel
kernels ``SOBEL_X_VEC`` and ``SOBEL_Y_VEC``.

Probability maps are (H, W, K) float64 arrays.  The whole-image
functions treat channels independently and sum over them; they accept
any finite channel stack, normalized or not.
"""

from abc import ABC, abstractmethod

import numpy as np

from .grids import SOBEL_X, SOBEL_X_VEC, SOBEL_Y, SOBEL_Y_VEC, adjoint_scatter, sobel_x, sobel_y


class SpatialLoss(ABC):
    """Interface for per-window spatial penalties.

    ``theta`` maps the row-major 9-vector of one channel's window to a
    scalar; ``theta_coeffs`` returns its (sub)gradient with respect to
    the nine values.  The trainer consumes only these two hooks, so new
    penalties (e.g. curvilinear-structure losses) plug in without
    touching the training loop.
    """

    @abstractmethod
    def theta(self, values: np.ndarray) -> float:
        """Penalty of one window; ``values`` has shape (9,)."""

    @abstractmethod
    def theta_coeffs(self, values: np.ndarray) -> np.ndarray:
        """d(theta)/d(values), shape (9,); a subgradient at kinks."""


class TotalVariation(SpatialLoss):
    """|Gx| + |Gy| with Sobel gradients; subgradient uses sign(0) = 0."""

    def theta(self, values: np.ndarray) -> float:
        v = _window_vector(values)
        # The Sobel taps sum to zero, so shifting by v[0] leaves the dot
        # products unchanged up to rounding and makes constant windows
        # hit exact zero instead of accumulated roundoff.
        v = v - v[0]
        return abs(SOBEL_X_VEC @ v) + abs(SOBEL_Y_VEC @ v)

    def theta_coeffs(self, values: np.ndarray) -> np.ndarray:
        v = _window_vector(values)
        v = v - v[0]
        gx = SOBEL_X_VEC @ v
        gy = SOBEL_Y_VEC @ v
        return np.sign(gx) * SOBEL_X_VEC + np.sign(gy) * SOBEL_Y_VEC


def _window_vector(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (9,):
        raise ValueError(f"window must hold 9 values, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("window contains non-finite values")
    return v


def _channel_window(nb, channel: int) -> np.ndarray:
    a = np.asarray(nb, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] != 9:
        raise ValueError(f"neighborhood must be (9,) or (9, K), got {a.shape}")
    if not 0 <= channel < a.shape[1]:
        raise ValueError(f"channel {channel} out of range for K={a.shape[1]}")
    return a[:, channel]


def tv_theta(nb, channel: int = 0) -> float:
    """Total variation of one class channel over a 3x3 window.

    ``nb`` is the row-major neighborhood, shape (9,) or (9, K).
    """
    return TotalVariation().theta(_channel_window(nb, channel))


def tv_theta_coeffs(nb, channel: int = 0) -> np.ndarray:
    """Per-neighbor subgradient of ``tv_theta``: sign(Gx)*Xvec + sign(Gy)*Yvec."""
    return TotalVariation().theta_coeffs(_channel_window(nb, channel))


def validate_prob_map(p, tol: float = 1e-6) -> np.ndarray:
    """Check (H, W, K) probability-map invariants and return the array."""
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"probability map must be (H, W, K), got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("probability map contains non-finite values")
    if a.min() < -tol or a.max() > 1.0 + tol:
        raise ValueError("probability values outside [0, 1]")
    sums = a.sum(axis=2)
    if np.abs(sums - 1.0).max() > tol:
        raise ValueError("per-pixel class probabilities do not sum to 1")
    return a


def _channel_stack(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, K) field, got {a.shape}")
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ValueError(f"field too small for a 3x3 window: {a.shape[:2]}")
    return a


def tv_value_image(p) -> float:
    """Total variation of a channel stack: sum over channels and valid pixels."""
    a = _channel_stack(p)
    total = 0.0
    for k in range(a.shape[2]):
        total += np.abs(sobel_x(a[:, :, k])).sum()
        total += np.abs(sobel_y(a[:, :, k])).sum()
    return float(total)


def tv_grad_image(p) -> np.ndarray:
    """Subgradient of ``tv_value_image`` with respect to every map value.

    Accumulates the per-window coefficients of every valid 3x3 window
    onto the pixels it covers; returned shape matches the input stack.
    """
    a = _channel_stack(p)
    h, w, num_ch = a.shape
    grad = np.empty_like(a)
    for k in range(num_ch):
        gx = sobel_x(a[:, :, k])
        gy = sobel_y(a[:, :, k])
        grad[:, :, k] = (adjoint_scatter(np.sign(gx), SOBEL_X, h, w)
                         + adjoint_scatter(np.sign(gy), SOBEL_Y, h, w))
    if np.asarray(p).ndim == 2:
        return grad[:, :, 0]
    return grad


def extract_neighborhood(p, row: int, col: int) -> np.ndarray:
    """Row-major 3x3 neighborhood of (row, col), shape (9, K).

    (row, col) must be at least one pixel from every border.
    """
    a = _channel_stack(p)
    h, w, num_ch = a.shape
    if not (1 <= row < h - 1 and 1 <= col < w - 1):
        raise ValueError(f"center ({row}, {col}) too close to border of {h}x{w} map")
    return a[row - 1:row + 2, col - 1:col + 2, :].reshape(9, num_ch)


def spatial_value_image(p, loss: SpatialLoss) -> float:
    """Sum a generic per-window penalty over all valid windows and channels."""
    a = _channel_stack(p)
    h, w, num_ch = a.shape
    total = 0.0
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            nb = a[r - 1:r + 2, c - 1:c + 2, :].reshape(9, num_ch)
            for k in range(num_ch):
                total += loss.theta(nb[:, k])
    return float(total)
