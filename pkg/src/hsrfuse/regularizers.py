"""Smooth nonconvex regularizers for the abundance maps.

Two penalties are used, both smoothed so the solver sees a continuously
differentiable objective:

* a smoothed Schatten-p function  phi(X) = tr((X X' + tau I)^(p/2)), an
  lp penalty on singular values that promotes low rank;
* a smoothed lq two-dimensional total variation built from circulant
  first-difference operators along both spatial axes.

Both admit quadratic majorizers that touch the function at the anchor point,
which yields the reweighting matrices (W for Schatten, diagonal U/V for TV)
driving the gradient and the step-size bounds.  The difference operators are
applied matrix-free; the dense circulant matrix is materialized only for
verification.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class SchattenConfig:
    """Smoothed Schatten-p penalty parameters; tau > 0 is mandatory because
    the reweighting exponent (p - 2)/2 is negative."""

    p: float = 0.5
    tau: float = 1.0

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass
class TvConfig:
    """Smoothed lq total-variation parameters."""

    q: float = 0.5
    epsilon: float = 1e-3

    def __post_init__(self):
        if not 0 < self.q <= 2:
            raise ValueError("q must lie in (0, 2]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


# ---------------------------------------------------------------------------
# circulant first differences
# ---------------------------------------------------------------------------

def circulant_diff(n):
    """Dense n x n circulant first-difference matrix: (Hx)_i = x_i - x_{i+1 mod n}."""
    return np.eye(n) - np.roll(np.eye(n), -1, axis=0)


def diff_norm(n):
    """Largest singular value of the circulant difference, 2*sin(pi*(n//2)/n)."""
    return 2.0 * math.sin(math.pi * (n // 2) / n)


def row_diff(img):
    """Circular difference along the first (row) axis."""
    return img - np.roll(img, -1, axis=0)


def row_diff_adjoint(img):
    return img - np.roll(img, 1, axis=0)


def col_diff(img):
    """Circular difference along the second (column) axis."""
    return img - np.roll(img, -1, axis=1)


def col_diff_adjoint(img):
    return img - np.roll(img, 1, axis=1)


# ---------------------------------------------------------------------------
# smoothed Schatten-p penalty
# ---------------------------------------------------------------------------

def _gram_eig(x, tau):
    """Eigendecomposition of X X' + tau I with eigenvalues clipped at tau."""
    lam, vec = np.linalg.eigh(x @ x.T)
    return np.maximum(lam + tau, tau), vec


def schatten_value(x, cfg):
    """sum_i (sigma_i(X)^2 + tau)^(p/2) over all row-count many sigma_i."""
    x = np.atleast_2d(x)
    lam = np.linalg.eigvalsh(x @ x.T)
    lam = np.maximum(lam, 0.0) + cfg.tau
    return float(np.sum(lam ** (cfg.p / 2)))


def schatten_weight(x, cfg):
    """Reweighting matrix W = (X X' + tau I)^((p-2)/2), symmetric PD.

    All eigenvalues of the base matrix are >= tau, so the negative power is
    well defined and the eigenvalues of W are <= tau^((p-2)/2).
    """
    return schatten_weight_terms(x, cfg)[0]


def schatten_weight_terms(x, cfg):
    """Reweighting matrix plus its largest eigenvalue, from one factorization."""
    x = np.atleast_2d(x)
    lam, vec = _gram_eig(x, cfg.tau)
    exponent = (cfg.p - 2) / 2
    weight = (vec * lam**exponent) @ vec.T
    return weight, float(lam[0] ** exponent)


def schatten_gradient(x, cfg):
    """Gradient p * W(X) @ X of the smoothed Schatten-p value."""
    return cfg.p * (schatten_weight(x, cfg) @ np.atleast_2d(x))


def schatten_majorizer_value(x, w_anchor, cfg):
    """Quadratic upper bound built at the anchor that produced ``w_anchor``:

        (p/2) tr(W (X X' + tau I)) + ((2-p)/2) tr(W^(p/(p-2))).

    Touches the Schatten value at the anchor and dominates it elsewhere.
    """
    x = np.atleast_2d(x)
    p, tau = cfg.p, cfg.tau
    lam_w = np.linalg.eigvalsh(w_anchor)
    const = (2 - p) / 2 * np.sum(lam_w ** (p / (p - 2)))
    quad = p / 2 * (np.sum((w_anchor @ x) * x) + tau * np.trace(w_anchor))
    return float(quad + const)


# ---------------------------------------------------------------------------
# smoothed lq total variation
# ---------------------------------------------------------------------------

def _lq_smooth(z, q, eps):
    return float(np.sum((z * z + eps) ** (q / 2)))


def tv_value(img, cfg):
    """Smoothed lq penalty of both circular difference images of ``img``."""
    return _lq_smooth(col_diff(img), cfg.q, cfg.epsilon) + _lq_smooth(
        row_diff(img), cfg.q, cfg.epsilon
    )


def tv_weights(img, cfg):
    """Diagonal reweighting entries (d^2 + eps)^((q-2)/2) for both directions.

    Returns (u, v) shaped like ``img``: u weights the column-direction
    differences, v the row-direction ones.  Entries lie in
    (0, eps^((q-2)/2)] and shrink where the local difference is large.
    """
    e = (cfg.q - 2) / 2
    u = (col_diff(img) ** 2 + cfg.epsilon) ** e
    v = (row_diff(img) ** 2 + cfg.epsilon) ** e
    return u, v


def tv_gradient(img, cfg):
    """Gradient q * (Hx' U Hx + Hy' V Hy) vec(img), applied matrix-free."""
    u, v = tv_weights(img, cfg)
    return cfg.q * (
        col_diff_adjoint(u * col_diff(img)) + row_diff_adjoint(v * row_diff(img))
    )


def tv_majorizer_value(img, anchor, cfg):
    """Quadratic upper bound of the TV penalty anchored at ``anchor``.

    Per difference entry with weight w = (q/2)(d_anchor^2 + eps)^((q-2)/2):
    w*d^2 + eps*w + ((2-q)/2)(2w/q)^(q/(q-2)); tight at img == anchor.
    """
    q, eps = cfg.q, cfg.epsilon
    total = 0.0
    for diff in (col_diff, row_diff):
        d = diff(img)
        w = q / 2 * (diff(anchor) ** 2 + eps) ** ((q - 2) / 2)
        total += float(
            np.sum(w * d * d + eps * w + (2 - q) / 2 * (2 * w / q) ** (q / (q - 2)))
        )
    return total
