"""Panoramic image- and depth-quality metrics.

WS-PSNR weights each pixel row by the cosine of its latitude to undo the
equirectangular oversampling near the poles; LRCE measures seam quality
as the mean absolute gap between the first and last columns. SSIM uses
an 11x11 Gaussian window (sigma 1.5, k1 = 0.01, k2 = 0.03, data range 1)
without latitude weighting. LPIPS is intentionally unavailable here.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .panorama import Panorama

WS_PSNR_CAP_DB = 99.0


@dataclass
class MetricReport:
    """One row of quality numbers; None marks metrics that were not computed."""

    ws_psnr: float | None = None
    ssim: float | None = None
    pcc: float | None = None
    lrce: float | None = None
    absrel: float | None = None
    rmse: float | None = None
    delta1: float | None = None
    lpips: str = "unavailable"
    name: str = ""

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _rgb(x) -> np.ndarray:
    arr = x.rgb if isinstance(x, Panorama) else x
    return np.asarray(arr, dtype=np.float64)


def _row_weights(height: int) -> np.ndarray:
    """cos-latitude weight per pixel row (row centers), strictly positive."""
    lat = (np.arange(height) + 0.5) * np.pi / height - np.pi / 2.0
    return np.cos(lat)


def ws_psnr(a, b, data_range: float = 1.0, cap_db: float = WS_PSNR_CAP_DB,
            mask: np.ndarray | None = None) -> float:
    """Latitude-weighted PSNR in dB, capped for (near-)identical images.

    mask optionally restricts the comparison to a pixel subset (weights
    renormalize over it).
    """
    ia, ib = _rgb(a), _rgb(b)
    if ia.shape != ib.shape:
        raise ValueError("image dims differ")
    w = np.broadcast_to(_row_weights(ia.shape[0])[:, None], ia.shape[:2]).copy()
    if mask is not None:
        w = w * mask
    if w.sum() <= 0:
        raise ValueError("empty mask")
    err2 = (ia - ib) ** 2
    if ia.ndim == 3:
        err2 = err2.mean(axis=2)
    wmse = float((w * err2).sum() / w.sum())
    if wmse <= 0:
        return cap_db
    return min(10.0 * np.log10(data_range ** 2 / wmse), cap_db)


def psnr(a, b, data_range: float = 1.0, cap_db: float = WS_PSNR_CAP_DB,
         mask: np.ndarray | None = None) -> float:
    """Plain (unweighted) PSNR in dB with the same cap and mask semantics."""
    ia, ib = _rgb(a), _rgb(b)
    if ia.shape != ib.shape:
        raise ValueError("image dims differ")
    err2 = (ia - ib) ** 2
    if ia.ndim == 3:
        err2 = err2.mean(axis=2)
    if mask is not None:
        if not mask.any():
            raise ValueError("empty mask")
        err2 = err2[mask]
    mse = float(err2.mean())
    if mse <= 0:
        return cap_db
    return min(10.0 * np.log10(data_range ** 2 / mse), cap_db)


def polar_band_mask(height: int, width: int, band_fraction: float = 0.1) -> np.ndarray:
    """(H, W) mask that is False inside the top/bottom polar row bands."""
    mask = np.ones((height, width), dtype=bool)
    band = int(round(band_fraction * height))
    if band:
        mask[:band] = False
        mask[height - band:] = False
    return mask


def pcc(depth_a: np.ndarray, depth_b: np.ndarray,
        valid_mask: np.ndarray | None = None) -> float:
    """Pearson correlation between two depth maps over valid pixels.

    The default mask excludes pixels where either depth is 0 (empty).
    Raises ValueError("degenerate depth") below 2 valid pixels or at zero
    variance.
    """
    da = np.asarray(depth_a, dtype=np.float64)
    db = np.asarray(depth_b, dtype=np.float64)
    if da.shape != db.shape:
        raise ValueError("depth dims differ")
    if valid_mask is None:
        valid_mask = (da > 0) & (db > 0)
    x = da[valid_mask]
    y = db[valid_mask]
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("degenerate depth")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0:
        raise ValueError("degenerate depth")
    return float((xc * yc).sum() / denom)


def lrce(img) -> float:
    """Left-Right Consistency Error: mean |column 0 - column W-1|."""
    arr = _rgb(img)
    if arr.shape[1] < 2:
        raise ValueError("need at least two columns")
    return float(np.abs(arr[:, 0] - arr[:, -1]).mean())


_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _ssim_kernel() -> np.ndarray:
    x = np.arange(_SSIM_WIN) - (_SSIM_WIN - 1) / 2.0
    k = np.exp(-0.5 * (x / _SSIM_SIGMA) ** 2)
    return k / k.sum()


def _win_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode windowed mean, shape (H-10, W-10)."""
    from numpy.lib.stride_tricks import sliding_window_view
    a = sliding_window_view(img, _SSIM_WIN, axis=0) @ kernel
    return sliding_window_view(a, _SSIM_WIN, axis=1) @ kernel


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean structural similarity (Wang et al. formulation, channel-averaged)."""
    ia, ib = _rgb(a), _rgb(b)
    if ia.shape != ib.shape:
        raise ValueError("image dims differ")
    if ia.ndim == 2:
        ia, ib = ia[..., None], ib[..., None]
    if min(ia.shape[0], ia.shape[1]) < _SSIM_WIN:
        raise ValueError("image smaller than the SSIM window")
    k = _ssim_kernel()
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    vals = []
    for c in range(ia.shape[2]):
        x, y = ia[..., c], ib[..., c]
        mx, my = _win_filter(x, k), _win_filter(y, k)
        vx = _win_filter(x * x, k) - mx * mx
        vy = _win_filter(y * y, k) - my * my
        cxy = _win_filter(x * y, k) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(float((num / den).mean()))
    return float(np.mean(vals))


def depth_metrics(depth: np.ndarray, depth_gt: np.ndarray,
                  mask: np.ndarray | None = None) -> tuple[float, float, float]:
    """(AbsRel, RMSE, delta1) over the mask; default mask is gt > 0."""
    d = np.asarray(depth, dtype=np.float64)
    g = np.asarray(depth_gt, dtype=np.float64)
    if d.shape != g.shape:
        raise ValueError("depth dims differ")
    if mask is None:
        mask = g > 0
    if not np.any(mask):
        raise ValueError("empty mask")
    d, g = d[mask], g[mask]
    absrel = float(np.mean(np.abs(d - g) / g))
    rmse = float(np.sqrt(np.mean((d - g) ** 2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(d / g, g / d)
    ratio[~np.isfinite(ratio)] = np.inf
    delta1 = float(np.mean(ratio < 1.25))
    return absrel, rmse, delta1


def evaluate_pair(rgb: np.ndarray, rgb_gt: np.ndarray,
                  depth: np.ndarray | None = None,
                  depth_gt: np.ndarray | None = None,
                  name: str = "") -> MetricReport:
    """Full report for one render/reference pair (depths optional)."""
    report = MetricReport(name=name)
    report.ws_psnr = ws_psnr(rgb, rgb_gt)
    report.ssim = ssim(rgb, rgb_gt)
    report.lrce = lrce(rgb)
    if depth is not None and depth_gt is not None:
        report.pcc = pcc(depth, depth_gt)
        report.absrel, report.rmse, report.delta1 = depth_metrics(depth, depth_gt)
    return report


def aggregate_reports(reports: list[MetricReport]) -> MetricReport:
    """Per-image-mean aggregate (the package default for multi-pair runs)."""
    agg = MetricReport(name="aggregate")
    for key in ("ws_psnr", "ssim", "pcc", "lrce", "absrel", "rmse", "delta1"):
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        if vals:
            setattr(agg, key, float(np.mean(vals)))
    return agg


def pooled_pcc(depths: list[np.ndarray], depths_ref: list[np.ndarray]) -> float:
    """PCC over the pooled valid pixels of several image pairs.

    The alternative to the default per-image-then-mean aggregation; pick
    whichever matches the evaluation protocol being reproduced.
    """
    xs, ys = [], []
    for d, g in zip(depths, depths_ref):
        d = np.asarray(d, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        valid = (d > 0) & (g > 0)
        xs.append(d[valid])
        ys.append(g[valid])
    pooled = np.concatenate(xs), np.concatenate(ys)
    return pcc(pooled[0], pooled[1], valid_mask=np.ones(pooled[0].shape, bool))


def write_reports(reports: list[MetricReport], json_path: str | Path | None = None,
                  csv_path: str | Path | None = None) -> None:
    rows = [r.to_dict() for r in reports]
    if json_path is not None:
        Path(json_path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    if csv_path is not None:
        keys = list(rows[0].keys())
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=keys)
            writer.writeheader()
            writer.writerows(rows)
