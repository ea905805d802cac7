"""Coupled fusion solvers: alternating accelerated projected gradient.

Known-operator problem, over the stacked maps S (pixels x terms, column r =
vec of map r) and the spectra C (bands x terms):

    min  1/2 |Yh - (P2 kron P1) S C'|^2 + 1/2 |Ym - S (PM C)'|^2
         + theta sum_r tv(S_r) + eta sum_r schatten(S_r) + lam/2 |C|^2
    s.t. S >= 0, C >= 0,

with Yh/Ym the pixels-by-bands unfoldings of the HSI/MSI.  The blind variant
replaces (P2 kron P1) S by a free coarse factor matrix that absorbs the
unknown spatial operators; the coarse block carries the Schatten penalty but
no TV term and no nonnegativity constraint.

Each block takes one projected gradient step with step size 1/L, where L is a
cheap upper bound on the block curvature (exact for the small Gram terms,
operator-norm products elsewhere), so the unaccelerated iteration decreases
the objective monotonically.  Nesterov extrapolation is applied per block by
default; gradients, reweighting matrices and curvature bounds are all
evaluated at the extrapolated anchor.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .degradation import DegradationOps, _check_full_row_rank
from .errors import DimensionError, NumericalError
from .metrics import MetricReport
from .regularizers import (
    SchattenConfig,
    TvConfig,
    col_diff,
    col_diff_adjoint,
    diff_norm,
    row_diff,
    row_diff_adjoint,
    schatten_value,
    schatten_weight_terms,
    tv_value,
    tv_weights,
)
from .tensors import refold, unfold

_TINY = np.finfo(float).tiny

DEFAULT_MAX_ITERS = 300
DEFAULT_MAX_ITERS_BLIND = 600


@dataclass
class SolverConfig:
    """Weights, smoothing constants and run controls for both solvers.

    The TV and low-rank weights are uniform across terms.  ``max_iters=None``
    falls back to 300 (known operators) or 600 (blind).  ``rel_tol=0``
    disables the relative-change stopping rule.
    """

    ridge_weight: float = 0.0
    tv_weight: float = 0.0
    lowrank_weight: float = 0.0
    schatten: SchattenConfig = field(default_factory=SchattenConfig)
    tv: TvConfig = field(default_factory=TvConfig)
    max_iters: int = None
    rel_tol: float = 1e-4
    accelerate: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("ridge_weight", "tv_weight", "lowrank_weight", "rel_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_iters is not None and self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass
class FusionReport:
    """Solver output: recovered tensor, factors, and the objective trace."""

    sri: np.ndarray
    maps: np.ndarray
    spectra: np.ndarray
    objective_trace: np.ndarray
    elapsed: np.ndarray
    converged: bool
    metrics: MetricReport = None

    @property
    def iterations(self):
        return len(self.objective_trace) - 1


@dataclass
class FusionData:
    """Unfolded observations plus the degradation operators (known case)."""

    hsi_mat: np.ndarray
    msi_mat: np.ndarray
    sri_dims: tuple
    hsi_dims: tuple
    ops: DegradationOps
    ph_gram_norm: float
    pm_gram_norm: float

    @classmethod
    def from_tensors(cls, hsi, msi, ops):
        hsi = np.asarray(hsi, dtype=float)
        msi = np.asarray(msi, dtype=float)
        n_bands = ops.pm.shape[1]
        expected_hsi = ops.hsi_dims + (n_bands,)
        if hsi.shape != expected_hsi:
            raise DimensionError(f"HSI shape {hsi.shape} does not match operators {expected_hsi}")
        expected_msi = (ops.p1.shape[1], ops.p2.shape[1], ops.pm.shape[0])
        if msi.shape != expected_msi:
            raise DimensionError(f"MSI shape {msi.shape} does not match operators {expected_msi}")
        return cls(
            hsi_mat=unfold(hsi),
            msi_mat=unfold(msi),
            sri_dims=(ops.p1.shape[1], ops.p2.shape[1], n_bands),
            hsi_dims=ops.hsi_dims,
            ops=ops,
            ph_gram_norm=(ops.p1_norm * ops.p2_norm) ** 2,
            pm_gram_norm=ops.pm_norm**2,
        )


@dataclass
class BlindFusionData:
    """Unfolded observations plus the spectral operator only (blind case)."""

    hsi_mat: np.ndarray
    msi_mat: np.ndarray
    sri_dims: tuple
    hsi_dims: tuple
    pm: np.ndarray
    pm_gram_norm: float

    @classmethod
    def from_tensors(cls, hsi, msi, pm):
        hsi = np.asarray(hsi, dtype=float)
        msi = np.asarray(msi, dtype=float)
        pm = np.atleast_2d(np.asarray(pm, dtype=float))
        pm_norm = _check_full_row_rank(pm, "pm")
        if hsi.ndim != 3 or msi.ndim != 3:
            raise DimensionError("HSI and MSI must be 3-d tensors")
        if hsi.shape[2] != pm.shape[1]:
            raise DimensionError(
                f"HSI band count {hsi.shape[2]} does not match pm columns {pm.shape[1]}"
            )
        if msi.shape[2] != pm.shape[0]:
            raise DimensionError(
                f"MSI band count {msi.shape[2]} does not match pm rows {pm.shape[0]}"
            )
        return cls(
            hsi_mat=unfold(hsi),
            msi_mat=unfold(msi),
            sri_dims=(msi.shape[0], msi.shape[1], hsi.shape[2]),
            hsi_dims=hsi.shape[:2],
            pm=pm,
            pm_gram_norm=pm_norm**2,
        )


# ---------------------------------------------------------------------------
# structured matrix-free products
# ---------------------------------------------------------------------------

def _apply_ph(mat, p1, p2, dims):
    """(P2 kron P1) @ mat for mat with I*J rows (columns are vec'd images)."""
    i, j = dims
    cols = mat.shape[1]
    cube = mat.reshape(i, j, cols, order="F")
    out = np.einsum("ai,ijc,bj->abc", p1, cube, p2, optimize=True)
    return out.reshape(p1.shape[0] * p2.shape[0], cols, order="F")


def _apply_ph_t(mat, p1, p2, hsi_dims, dims):
    """(P2 kron P1)' @ mat for mat with Ih*Jh rows."""
    ih, jh = hsi_dims
    i, j = dims
    cols = mat.shape[1]
    cube = mat.reshape(ih, jh, cols, order="F")
    out = np.einsum("ai,abc,bj->ijc", p1, cube, p2, optimize=True)
    return out.reshape(i * j, cols, order="F")


def _sq_norm(mat):
    """sigma_max(M)^2 via the small Gram matrix."""
    gram = mat.T @ mat
    if gram.size == 0:
        return 0.0
    return float(max(np.linalg.eigvalsh(gram)[-1], 0.0))


def _maps_as_images(maps, shape):
    i, j = shape
    return maps.reshape(i, j, maps.shape[1], order="F")


def _penalty_value(maps, shape, cfg):
    total = 0.0
    if cfg.tv_weight == 0 and cfg.lowrank_weight == 0:
        return total
    cube = _maps_as_images(maps, shape)
    for r in range(maps.shape[1]):
        img = cube[:, :, r]
        if cfg.tv_weight > 0:
            total += cfg.tv_weight * tv_value(img, cfg.tv)
        if cfg.lowrank_weight > 0:
            total += cfg.lowrank_weight * schatten_value(img, cfg.schatten)
    return total


def _map_penalties(maps, shape, cfg, with_tv=True):
    """Regularizer gradient at ``maps`` plus the curvature its weights induce.

    Returns (gradient, max_r sigma_max(W_r), max_r TV curvature bound); the
    TV bound per term is |H_cols|^2 max(u) + |H_rows|^2 max(v).
    """
    grad = np.zeros_like(maps)
    w_curv = 0.0
    tv_curv = 0.0
    use_tv = with_tv and cfg.tv_weight > 0
    use_lr = cfg.lowrank_weight > 0
    if not (use_tv or use_lr):
        return grad, w_curv, tv_curv
    i, j = shape
    cube = _maps_as_images(maps, shape)
    col_norm_sq = diff_norm(j) ** 2
    row_norm_sq = diff_norm(i) ** 2
    for r in range(maps.shape[1]):
        img = cube[:, :, r]
        acc = np.zeros(shape)
        if use_lr:
            w, w_sig = schatten_weight_terms(img, cfg.schatten)
            acc += cfg.schatten.p * cfg.lowrank_weight * (w @ img)
            w_curv = max(w_curv, w_sig)
        if use_tv:
            q = cfg.tv.q
            u, v = tv_weights(img, cfg.tv)
            acc += cfg.tv_weight * q * (
                col_diff_adjoint(u * col_diff(img)) + row_diff_adjoint(v * row_diff(img))
            )
            tv_curv = max(tv_curv, col_norm_sq * float(u.max()) + row_norm_sq * float(v.max()))
        grad[:, r] += acc.reshape(-1, order="F")
    return grad, w_curv, tv_curv


# ---------------------------------------------------------------------------
# known-operator objective, gradients, step bounds
# ---------------------------------------------------------------------------

def objective(maps, spectra, data, cfg):
    """Full objective at (S, C) for the known-operator problem."""
    i, j, _ = data.sri_dims
    phs = _apply_ph(maps, data.ops.p1, data.ops.p2, (i, j))
    f = 0.5 * float(np.sum((phs @ spectra.T - data.hsi_mat) ** 2))
    f += 0.5 * float(np.sum((maps @ (data.ops.pm @ spectra).T - data.msi_mat) ** 2))
    f += 0.5 * cfg.ridge_weight * float(np.sum(spectra**2))
    return f + _penalty_value(maps, (i, j), cfg)


def grad_spectra(maps, spectra, data, cfg):
    """Gradient of the known-operator objective in the spectra block."""
    i, j, _ = data.sri_dims
    pm = data.ops.pm
    phs = _apply_ph(maps, data.ops.p1, data.ops.p2, (i, j))
    g = spectra @ (phs.T @ phs)
    g += pm.T @ (pm @ spectra) @ (maps.T @ maps)
    g += cfg.ridge_weight * spectra
    g -= data.hsi_mat.T @ phs
    g -= pm.T @ (data.msi_mat.T @ maps)
    return g


def _data_grad_maps(maps, spectra, data):
    i, j, _ = data.sri_dims
    p1, p2, pm = data.ops.p1, data.ops.p2, data.ops.pm
    phs = _apply_ph(maps, p1, p2, (i, j))
    g = _apply_ph_t((phs @ spectra.T - data.hsi_mat) @ spectra, p1, p2, data.hsi_dims, (i, j))
    pmc = pm @ spectra
    g += (maps @ pmc.T - data.msi_mat) @ pmc
    return g


def grad_maps(maps, spectra, data, cfg):
    """Gradient of the known-operator objective in the maps block.

    The regularizer contribution is the tangent-point gradient of the
    quadratic majorizers, which equals the true gradient there.
    """
    pen, _, _ = _map_penalties(maps, data.sri_dims[:2], cfg)
    return _data_grad_maps(maps, spectra, data) + pen


def _spectra_bound(maps, data, cfg):
    return _sq_norm(maps) * (data.ph_gram_norm + data.pm_gram_norm) + cfg.ridge_weight


def _maps_bound(spectra, data, cfg, w_curv, tv_curv):
    l = _sq_norm(spectra) * data.ph_gram_norm
    l += _sq_norm(data.ops.pm @ spectra)
    l += cfg.schatten.p * cfg.lowrank_weight * w_curv
    l += cfg.tv.q * cfg.tv_weight * tv_curv
    return l


def step_bounds(maps, spectra, data, cfg):
    """Cheap upper bounds (L_spectra, L_maps) on the block curvatures.

    Constant operator norms are cached on ``data``; the reweighting terms are
    evaluated at ``maps``, which should be the gradient anchor.
    """
    _, w_curv, tv_curv = _map_penalties(maps, data.sri_dims[:2], cfg)
    return _spectra_bound(maps, data, cfg), _maps_bound(spectra, data, cfg, w_curv, tv_curv)


# ---------------------------------------------------------------------------
# blind objective, gradients, step bounds
# ---------------------------------------------------------------------------

def objective_blind(maps, coarse, spectra, data, cfg):
    """Full objective at (S, coarse, C) for the blind problem."""
    i, j, _ = data.sri_dims
    f = 0.5 * float(np.sum((coarse @ spectra.T - data.hsi_mat) ** 2))
    f += 0.5 * float(np.sum((maps @ (data.pm @ spectra).T - data.msi_mat) ** 2))
    f += 0.5 * cfg.ridge_weight * float(np.sum(spectra**2))
    f += _penalty_value(maps, (i, j), cfg)
    if cfg.lowrank_weight > 0:
        cube = _maps_as_images(coarse, data.hsi_dims)
        for r in range(coarse.shape[1]):
            f += cfg.lowrank_weight * schatten_value(cube[:, :, r], cfg.schatten)
    return f


def grad_spectra_blind(maps, coarse, spectra, data, cfg):
    g = spectra @ (coarse.T @ coarse)
    g += data.pm.T @ (data.pm @ spectra) @ (maps.T @ maps)
    g += cfg.ridge_weight * spectra
    g -= data.hsi_mat.T @ coarse
    g -= data.pm.T @ (data.msi_mat.T @ maps)
    return g


def grad_maps_blind(maps, spectra, data, cfg):
    """Maps gradient in the blind problem; the HSI term does not touch S."""
    pmc = data.pm @ spectra
    pen, _, _ = _map_penalties(maps, data.sri_dims[:2], cfg)
    return (maps @ pmc.T - data.msi_mat) @ pmc + pen


def grad_coarse_blind(coarse, spectra, data, cfg):
    """Coarse-block gradient: HSI fit plus the Schatten term, no TV."""
    pen, _, _ = _map_penalties(coarse, data.hsi_dims, cfg, with_tv=False)
    return (coarse @ spectra.T - data.hsi_mat) @ spectra + pen


def step_bounds_blind(maps, coarse, spectra, data, cfg):
    """Cheap upper bounds (L_spectra, L_maps, L_coarse) for the blind blocks."""
    _, w_curv, tv_curv = _map_penalties(maps, data.sri_dims[:2], cfg)
    _, wc_curv, _ = _map_penalties(coarse, data.hsi_dims, cfg, with_tv=False)
    l_c = data.pm_gram_norm * _sq_norm(maps) + _sq_norm(coarse) + cfg.ridge_weight
    l_s = _sq_norm(data.pm @ spectra)
    l_s += cfg.schatten.p * cfg.lowrank_weight * w_curv
    l_s += cfg.tv.q * cfg.tv_weight * tv_curv
    l_t = _sq_norm(spectra) + cfg.schatten.p * cfg.lowrank_weight * wc_curv
    return l_c, l_s, l_t


# ---------------------------------------------------------------------------
# iteration primitives
# ---------------------------------------------------------------------------

def apg_step(x, grad, step, project=True):
    """One (projected) gradient step: max(x - step*grad, 0) or the unprojected move."""
    if step <= 0:
        raise ValueError("step must be positive")
    y = x - step * grad
    return np.maximum(y, 0.0) if project else y


def extrapolate(x_new, x_old, gamma_old):
    """Nesterov extrapolation; returns the look-ahead point and the new gamma.

    gamma_new = (1 + sqrt(1 + 4 gamma_old^2)) / 2, and the momentum
    coefficient (gamma_old - 1)/gamma_new always lies in [0, 1).
    """
    gamma_new = (1.0 + math.sqrt(1.0 + 4.0 * gamma_old**2)) / 2.0
    x_check = x_new + ((gamma_old - 1.0) / gamma_new) * (x_new - x_old)
    return x_check, gamma_new


class _Trace:
    def __init__(self):
        self.values = []
        self.elapsed = []
        self._start = time.perf_counter()

    def record(self, value):
        if not math.isfinite(value):
            raise NumericalError(
                "objective became non-finite; step sizes no longer control the iteration",
                trace=np.asarray(self.values),
                elapsed=np.asarray(self.elapsed),
            )
        self.values.append(value)
        self.elapsed.append(time.perf_counter() - self._start)

    def stalled(self, rel_tol):
        prev, last = self.values[-2], self.values[-1]
        return abs(prev - last) <= rel_tol * abs(prev)


def _init_factor(rng, shape, given, label):
    if given is None:
        return rng.uniform(size=shape)
    arr = np.array(given, dtype=float)
    if arr.shape != shape:
        raise DimensionError(f"warm start {label} has shape {arr.shape}, expected {shape}")
    return arr


# ---------------------------------------------------------------------------
# full solvers
# ---------------------------------------------------------------------------

def fuse(hsi, msi, ops, n_terms, cfg=None, init=None):
    """Recover the super-resolution tensor with known degradation operators.

    ``init`` optionally warm-starts (maps, spectra); otherwise both are drawn
    uniform(0, 1) from ``cfg.seed``.  Returns a :class:`FusionReport` whose
    trace holds the objective at the initializer and after every iteration.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    data = FusionData.from_tensors(hsi, msi, ops)
    i, j, k = data.sri_dims
    max_iters = DEFAULT_MAX_ITERS if cfg.max_iters is None else cfg.max_iters

    rng = np.random.default_rng(cfg.seed)
    given = init if init is not None else (None, None)
    maps = _init_factor(rng, (i * j, n_terms), given[0], "maps")
    spectra = _init_factor(rng, (k, n_terms), given[1], "spectra")

    maps_ex, spectra_ex = maps, spectra
    gamma_c = gamma_s = 1.0
    trace = _Trace()
    trace.record(objective(maps, spectra, data, cfg))
    converged = False
    for _ in range(max_iters):
        l_c = _spectra_bound(maps, data, cfg)
        new_spectra = apg_step(
            spectra_ex, grad_spectra(maps, spectra_ex, data, cfg), 1.0 / max(l_c, _TINY)
        )
        if cfg.accelerate:
            spectra_ex, gamma_c = extrapolate(new_spectra, spectra, gamma_c)
        else:
            spectra_ex = new_spectra
        spectra = new_spectra

        pen, w_curv, tv_curv = _map_penalties(maps_ex, (i, j), cfg)
        l_s = _maps_bound(spectra, data, cfg, w_curv, tv_curv)
        g_s = _data_grad_maps(maps_ex, spectra, data) + pen
        new_maps = apg_step(maps_ex, g_s, 1.0 / max(l_s, _TINY))
        if cfg.accelerate:
            maps_ex, gamma_s = extrapolate(new_maps, maps, gamma_s)
        else:
            maps_ex = new_maps
        maps = new_maps

        trace.record(objective(maps, spectra, data, cfg))
        if trace.stalled(cfg.rel_tol):
            converged = True
            break

    return FusionReport(
        sri=refold(maps @ spectra.T, data.sri_dims),
        maps=maps,
        spectra=spectra,
        objective_trace=np.asarray(trace.values),
        elapsed=np.asarray(trace.elapsed),
        converged=converged,
    )


def fuse_blind(hsi, msi, pm, n_terms, cfg=None, init=None):
    """Recover the super-resolution tensor with unknown spatial operators.

    Three-block iteration: spectra and maps are projected onto the
    nonnegative orthant, the coarse block is updated without projection.  The
    output tensor is rebuilt from (maps, spectra) only; the coarse factors are
    an internal device and are discarded.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    data = BlindFusionData.from_tensors(hsi, msi, pm)
    i, j, k = data.sri_dims
    ih, jh = data.hsi_dims
    max_iters = DEFAULT_MAX_ITERS_BLIND if cfg.max_iters is None else cfg.max_iters

    rng = np.random.default_rng(cfg.seed)
    given = init if init is not None else (None, None, None)
    maps = _init_factor(rng, (i * j, n_terms), given[0], "maps")
    spectra = _init_factor(rng, (k, n_terms), given[1], "spectra")
    coarse = _init_factor(rng, (ih * jh, n_terms), given[2], "coarse maps")

    maps_ex, spectra_ex, coarse_ex = maps, spectra, coarse
    gamma_c = gamma_s = gamma_t = 1.0
    trace = _Trace()
    trace.record(objective_blind(maps, coarse, spectra, data, cfg))
    converged = False
    for _ in range(max_iters):
        l_c = data.pm_gram_norm * _sq_norm(maps) + _sq_norm(coarse) + cfg.ridge_weight
        new_spectra = apg_step(
            spectra_ex,
            grad_spectra_blind(maps, coarse, spectra_ex, data, cfg),
            1.0 / max(l_c, _TINY),
        )
        if cfg.accelerate:
            spectra_ex, gamma_c = extrapolate(new_spectra, spectra, gamma_c)
        else:
            spectra_ex = new_spectra
        spectra = new_spectra

        pen, w_curv, tv_curv = _map_penalties(maps_ex, (i, j), cfg)
        l_s = _sq_norm(data.pm @ spectra)
        l_s += cfg.schatten.p * cfg.lowrank_weight * w_curv
        l_s += cfg.tv.q * cfg.tv_weight * tv_curv
        pmc = data.pm @ spectra
        g_s = (maps_ex @ pmc.T - data.msi_mat) @ pmc + pen
        new_maps = apg_step(maps_ex, g_s, 1.0 / max(l_s, _TINY))
        if cfg.accelerate:
            maps_ex, gamma_s = extrapolate(new_maps, maps, gamma_s)
        else:
            maps_ex = new_maps
        maps = new_maps

        pen_t, wc_curv, _ = _map_penalties(coarse_ex, (ih, jh), cfg, with_tv=False)
        l_t = _sq_norm(spectra) + cfg.schatten.p * cfg.lowrank_weight * wc_curv
        g_t = (coarse_ex @ spectra.T - data.hsi_mat) @ spectra + pen_t
        new_coarse = apg_step(coarse_ex, g_t, 1.0 / max(l_t, _TINY), project=False)
        if cfg.accelerate:
            coarse_ex, gamma_t = extrapolate(new_coarse, coarse, gamma_t)
        else:
            coarse_ex = new_coarse
        coarse = new_coarse

        trace.record(objective_blind(maps, coarse, spectra, data, cfg))
        if trace.stalled(cfg.rel_tol):
            converged = True
            break

    return FusionReport(
        sri=refold(maps @ spectra.T, data.sri_dims),
        maps=maps,
        spectra=spectra,
        objective_trace=np.asarray(trace.values),
        elapsed=np.asarray(trace.elapsed),
        converged=converged,
    )
