"""Dense 2-D scalar fields and the 3x3 correlation primitives.

Conventions used throughout the package:

* a grid is a 2-D float64 array, row-major, all entries finite;
* a kernel is a 3x3 float64 array;
* ``correlate_valid`` is cross-correlation (no kernel flip) and only
  produces output where the full 3x3 window fits, so a HxW grid maps to
  (H-2)x(W-2).  Border pixels are excluded rather than padded.

``SOBEL_X`` responds to variation along rows (vertical image gradients),
``SOBEL_Y`` along columns.  Both have zero tap-sum, so constants map to
zero.
"""

import numpy as np

SOBEL_X = np.array([[-1.0, -2.0, -1.0],
                    [0.0, 0.0, 0.0],
                    [1.0, 2.0, 1.0]])
SOBEL_Y = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])

# Row-major vectorized forms, used by the per-window loss functions.
SOBEL_X_VEC = SOBEL_X.ravel().copy()
SOBEL_Y_VEC = SOBEL_Y.ravel().copy()


def as_grid(a) -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float64 grid."""
    g = np.asarray(a, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {g.shape}")
    if not np.isfinite(g).all():
        raise ValueError("grid contains non-finite entries")
    return g


def as_kernel(k) -> np.ndarray:
    kk = np.asarray(k, dtype=np.float64)
    if kk.shape != (3, 3):
        raise ValueError(f"kernel must be 3x3, got shape {kk.shape}")
    if not np.isfinite(kk).all():
        raise ValueError("kernel contains non-finite entries")
    return kk


def correlate_valid(grid, kernel) -> np.ndarray:
    """Valid-region cross-correlation of a grid with a 3x3 kernel.

    out(r, c) = sum_{i,j} kernel(i, j) * grid(r+i, c+j)

    Kernels whose taps sum to exactly zero are applied to
    ``grid - grid[0, 0]``, which is the same result up to rounding but
    makes constant grids map to exact zeros instead of accumulated
    roundoff (sign() downstream must not see residue).
    """
    g = as_grid(grid)
    k = as_kernel(kernel)
    h, w = g.shape
    if h < 3 or w < 3:
        raise ValueError(f"grid too small for a 3x3 window: {h}x{w}")
    if k.sum() == 0.0:
        g = g - g[0, 0]
    out = np.zeros((h - 2, w - 2))
    for i in range(3):
        for j in range(3):
            out += k[i, j] * g[i:i + h - 2, j:j + w - 2]
    return out


def sobel_x(grid) -> np.ndarray:
    """Row-direction derivative estimate (valid region only)."""
    return correlate_valid(grid, SOBEL_X)


def sobel_y(grid) -> np.ndarray:
    """Column-direction derivative estimate (valid region only)."""
    return correlate_valid(grid, SOBEL_Y)


def adjoint_scatter(coeff, kernel, out_h: int, out_w: int) -> np.ndarray:
    """Adjoint of ``correlate_valid``: scatter window coefficients.

    Each valid-region coefficient at window position q adds
    kernel(i, j) * coeff(q) onto the grid pixel covered by tap (i, j)
    of q's window.  Satisfies the adjoint identity
    ``<correlate_valid(g, k), c> == <g, adjoint_scatter(c, k, H, W)>``.
    """
    c = as_grid(coeff)
    k = as_kernel(kernel)
    ch, cw = c.shape
    if out_h < 3 or out_w < 3:
        raise ValueError(f"output too small for a 3x3 window: {out_h}x{out_w}")
    if (ch, cw) != (out_h - 2, out_w - 2):
        raise ValueError(
            f"coefficient field {ch}x{cw} does not match valid region "
            f"{out_h - 2}x{out_w - 2} of a {out_h}x{out_w} output")
    out = np.zeros((out_h, out_w))
    for i in range(3):
        for j in range(3):
            out[i:i + ch, j:j + cw] += k[i, j] * c
    return out
