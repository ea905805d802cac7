"""Quality metrics for reference/estimate pairs of spectral image cubes.

Conventions (the literature leaves several constants open; these are fixed
here and documented so numbers are comparable across runs of this tool):

* R-SNR   : 10*log10(|ref|_F^2 / |ref - est|_F^2), +inf for an exact match.
* RMSE    : |ref - est|_F / sqrt(I*J*K).
* SAM     : mean over pixels of the angle (radians) between spectral fibers,
            computed as 2*arcsin(|a/|a| - b/|b||/2) for numerical stability;
            fibers with zero norm on either side are skipped and counted.
* ERGAS   : 100/ratio * sqrt(mean_k(rmse_k^2 / mu_k^2)) with mu_k the
            reference band mean; bands with zero mean are skipped.
* CC      : mean over bands of the Pearson correlation of the band slabs;
            zero-variance bands are skipped.
* SSIM    : mean over bands of single-scale SSIM, 8x8 uniform sliding window,
            stabilizers c1=(0.01*D)^2, c2=(0.03*D)^2 with D the global
            dynamic range of the reference.
* UIQI    : mean over bands of the Q index, 10x10 sliding window (stride 1),
            sample statistics; degenerate-variance windows are skipped.

Windows shrink to the image when a spatial axis is smaller than the nominal
window.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError
from .tensors import ensure_finite

SSIM_WINDOW = 8
UIQI_WINDOW = 10


@dataclass
class MetricReport:
    rsnr_db: float
    ssim: float
    cc: float
    uiqi: float
    rmse: float
    ergas: float
    sam_rad: float
    sam_skipped: int = 0
    per_band: dict = field(default=None, repr=False)

    def to_dict(self):
        out = {
            "rsnr_db": self.rsnr_db,
            "ssim": self.ssim,
            "cc": self.cc,
            "uiqi": self.uiqi,
            "rmse": self.rmse,
            "ergas": self.ergas,
            "sam_rad": self.sam_rad,
            "sam_skipped": self.sam_skipped,
        }
        if self.per_band is not None:
            out["per_band"] = {k: np.asarray(v).tolist() for k, v in self.per_band.items()}
        return out


def evaluate(reference, estimate, ratio=4, per_band=False):
    """Score ``estimate`` against ``reference``; both (I, J, K) tensors.

    ``ratio`` is the spatial downsampling factor entering the ERGAS scale.
    """
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape or reference.ndim != 3:
        raise DimensionError(
            f"need two equal-shape 3-d tensors, got {reference.shape} and {estimate.shape}"
        )
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    ensure_finite(reference, "reference")
    ensure_finite(estimate, "estimate")
    ref_energy = float(np.sum(reference**2))
    if ref_energy == 0.0:
        raise ValueError("reference tensor has zero norm; R-SNR is undefined")

    i, j, k = reference.shape
    diff = reference - estimate
    err_energy = float(np.sum(diff**2))
    rsnr = np.inf if err_energy == 0.0 else 10.0 * np.log10(ref_energy / err_energy)
    rmse = np.sqrt(err_energy / (i * j * k))

    sam, skipped = _sam(reference, estimate)
    drange = float(reference.max() - reference.min()) or 1.0

    band_rmse = np.sqrt(np.sum(diff**2, axis=(0, 1)) / (i * j))
    mu = reference.mean(axis=(0, 1))
    live = mu != 0.0
    ergas = (
        100.0 / ratio * float(np.sqrt(np.mean((band_rmse[live] / mu[live]) ** 2)))
        if live.any()
        else 0.0
    )

    cc = _mean_over_bands(_pearson, reference, estimate)
    ssim = float(np.mean([_ssim_band(reference[:, :, b], estimate[:, :, b], drange)
                          for b in range(k)]))
    uiqi = float(np.mean([_uiqi_band(reference[:, :, b], estimate[:, :, b])
                          for b in range(k)]))

    table = per_band_curves(reference, estimate) if per_band else None
    return MetricReport(
        rsnr_db=float(rsnr),
        ssim=ssim,
        cc=cc,
        uiqi=uiqi,
        rmse=float(rmse),
        ergas=float(ergas),
        sam_rad=sam,
        sam_skipped=skipped,
        per_band=table,
    )


def per_band_curves(reference, estimate):
    """Per-band R-SNR, SSIM, UIQI and RMSE, one entry per spectral band."""
    if reference.shape != estimate.shape or reference.ndim != 3:
        raise DimensionError("need two equal-shape 3-d tensors")
    i, j, k = reference.shape
    drange = float(reference.max() - reference.min()) or 1.0
    rows = {"band": [], "rsnr_db": [], "ssim": [], "uiqi": [], "rmse": []}
    for b in range(k):
        ref, est = reference[:, :, b], estimate[:, :, b]
        err = float(np.sum((ref - est) ** 2))
        sig = float(np.sum(ref**2))
        if err == 0.0:
            rsnr = np.inf
        elif sig == 0.0:
            rsnr = -np.inf  # zero-energy reference band with a nonzero estimate
        else:
            rsnr = 10.0 * np.log10(sig / err)
        rows["band"].append(b)
        rows["rsnr_db"].append(rsnr)
        rows["ssim"].append(_ssim_band(ref, est, drange))
        rows["uiqi"].append(_uiqi_band(ref, est))
        rows["rmse"].append(float(np.sqrt(err / (i * j))))
    return {key: np.asarray(val) for key, val in rows.items()}


def _sam(reference, estimate):
    i, j, k = reference.shape
    ref = reference.reshape(i * j, k, order="F")
    est = estimate.reshape(i * j, k, order="F")
    ref_norm = np.linalg.norm(ref, axis=1)
    est_norm = np.linalg.norm(est, axis=1)
    alive = (ref_norm > 0) & (est_norm > 0)
    skipped = int(np.size(ref_norm) - np.count_nonzero(alive))
    if not alive.any():
        return 0.0, skipped
    unit_gap = np.linalg.norm(
        ref[alive] / ref_norm[alive, None] - est[alive] / est_norm[alive, None], axis=1
    )
    angles = 2.0 * np.arcsin(np.clip(0.5 * unit_gap, 0.0, 1.0))
    return float(np.mean(angles)), skipped


def _pearson(ref, est):
    xc = ref.ravel() - ref.mean()
    yc = est.ravel() - est.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.dot(xc, yc) / (sx * sy))


def _mean_over_bands(band_fn, reference, estimate):
    vals = []
    for b in range(reference.shape[2]):
        val = band_fn(reference[:, :, b], estimate[:, :, b])
        if val is not None:
            vals.append(val)
    if not vals:
        return 1.0 if np.array_equal(reference, estimate) else 0.0
    return float(np.mean(vals))


def _window_stats(ref, est, width):
    """Sliding-window sums of x, y, x^2, y^2, xy over width x width patches."""
    wi = min(width, ref.shape[0])
    wj = min(width, ref.shape[1])
    n = wi * wj
    wx = sliding_window_view(ref, (wi, wj))
    wy = sliding_window_view(est, (wi, wj))
    mx = wx.mean(axis=(2, 3))
    my = wy.mean(axis=(2, 3))
    vx = (wx * wx).mean(axis=(2, 3)) - mx * mx
    vy = (wy * wy).mean(axis=(2, 3)) - my * my
    cov = (wx * wy).mean(axis=(2, 3)) - mx * my
    return n, mx, my, vx, vy, cov


def _ssim_band(ref, est, drange):
    _, mx, my, vx, vy, cov = _window_stats(ref, est, SSIM_WINDOW)
    c1 = (0.01 * drange) ** 2
    c2 = (0.03 * drange) ** 2
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def _uiqi_band(ref, est):
    n, mx, my, vx, vy, cov = _window_stats(ref, est, UIQI_WINDOW)
    if n < 2:
        return 1.0 if np.array_equal(ref, est) else 0.0
    # sample (ddof=1) statistics, in the factored Q form so an exact match
    # evaluates to exactly 1 in floating point
    corr = n / (n - 1) * cov
    sx2 = n / (n - 1) * vx
    sy2 = n / (n - 1) * vy
    lum_den = mx * mx + my * my
    var_den = sx2 + sy2
    scale = float(np.max(var_den) + np.max(lum_den))
    alive = (var_den > 1e-12 * scale) & (lum_den > 1e-12 * scale)
    if not alive.any():
        return 1.0 if np.array_equal(ref, est) else 0.0
    q = (2 * mx * my)[alive] / lum_den[alive] * (2 * corr)[alive] / var_den[alive]
    return float(np.mean(q))
