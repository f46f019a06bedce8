"""Evaluation metrics for abundance and support estimates.

Scalar summaries use the Frobenius convention: the average RMSE is the
root of the *mean squared* per-entry error, not the mean of per-pixel
roots, so it matches sqrt(||A_hat - A||_F^2 / (N R)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .types import AbundanceField, HyperCube, Library
from .validation import as_float_array, require_binary, require_finite


def _values(a, name: str) -> np.ndarray:
    arr = a.values if isinstance(a, AbundanceField) else as_float_array(a, name, ndim=2)
    require_finite(arr, name)
    return arr


def rmse(a_hat, a_true) -> tuple[np.ndarray, float]:
    """(per-pixel RMSE over endmembers, Frobenius average)."""
    ah = _values(a_hat, "a_hat")
    at = _values(a_true, "a_true")
    if ah.shape != at.shape:
        raise ValueError(f"shape mismatch {ah.shape} vs {at.shape}")
    sq = ((ah - at) ** 2).mean(axis=0)
    return np.sqrt(sq), float(np.sqrt(sq.mean()))


def aad(a_hat, a_true) -> tuple[np.ndarray, float, int]:
    """Per-pixel abundance angle (radians), its average, skipped count.

    The angle is undefined when either abundance vector is all-zero;
    such pixels get NaN, are excluded from the average, and counted.
    """
    ah = _values(a_hat, "a_hat")
    at = _values(a_true, "a_true")
    if ah.shape != at.shape:
        raise ValueError(f"shape mismatch {ah.shape} vs {at.shape}")
    nh = np.linalg.norm(ah, axis=0)
    nt = np.linalg.norm(at, axis=0)
    defined = (nh > 0) & (nt > 0)
    out = np.full(ah.shape[1], np.nan)
    dots = np.einsum("rn,rn->n", ah, at)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.clip(dots[defined] / (nh[defined] * nt[defined]), -1.0, 1.0)
    out[defined] = np.arccos(cosang)
    skipped = int(np.sum(~defined))
    avg = float(out[defined].mean()) if defined.any() else math.nan
    return out, avg, skipped


def reconstruction_error(a_hat, cube: HyperCube, lib: Library) -> tuple[np.ndarray, float]:
    """(per-pixel spectral RMSE of M @ a_hat vs y, Frobenius average)."""
    ah = _values(a_hat, "a_hat")
    if ah.shape != (lib.n_endmembers, cube.n_pixels):
        raise ValueError("a_hat shape does not match cube/library")
    if cube.n_bands != lib.n_bands:
        raise ValueError("cube and library band counts differ")
    resid = cube.data - lib.data @ ah
    sq = (resid**2).mean(axis=0)
    return np.sqrt(sq), float(np.sqrt(sq.mean()))


def support_scores(z_hat, z_true) -> dict:
    """Detection quality of a binary support estimate.

    Returns per-endmember precision/recall/F1 arrays, global confusion
    counts, and the overall Hamming error rate (fraction of differing
    entries).  Empty-column estimates are legal here.
    """
    zh = require_binary(np.asarray(z_hat), "z_hat")
    zt = require_binary(np.asarray(z_true), "z_true")
    if zh.shape != zt.shape or zh.ndim != 2:
        raise ValueError(f"shape mismatch {zh.shape} vs {zt.shape}")
    tp = ((zh == 1) & (zt == 1)).sum(axis=1).astype(np.float64)
    fp = ((zh == 1) & (zt == 0)).sum(axis=1).astype(np.float64)
    fn = ((zh == 0) & (zt == 1)).sum(axis=1).astype(np.float64)
    tn = ((zh == 0) & (zt == 0)).sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(
            precision + recall > 0,
            2 * precision * recall / (precision + recall),
            0.0,
        )
    hamming = float(np.mean(zh != zt))
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": int(tp.sum()),
        "fp": int(fp.sum()),
        "fn": int(fn.sum()),
        "tn": int(tn.sum()),
        "hamming": hamming,
    }


@dataclass(frozen=True)
class EvalReport:
    """Metrics of one abundance/support estimate against ground truth."""

    name: str
    rmse_per_pixel: np.ndarray
    rmse_avg: float
    aad_per_pixel: np.ndarray
    aad_avg: float
    aad_skipped: int
    re_per_pixel: np.ndarray
    re_avg: float
    support: dict | None = None
    extras: dict = field(default_factory=dict)

    def scalars(self) -> dict:
        """Flat name -> value mapping of every scalar in the report."""
        out = {
            "rmse_avg": self.rmse_avg,
            "aad_avg": self.aad_avg,
            "aad_skipped": self.aad_skipped,
            "re_avg": self.re_avg,
        }
        if self.support is not None:
            out["support_hamming"] = self.support["hamming"]
            for key in ("tp", "fp", "fn", "tn"):
                out[f"support_{key}"] = self.support[key]
            for r, (p, rc, f1) in enumerate(
                zip(self.support["precision"], self.support["recall"], self.support["f1"])
            ):
                out[f"support_precision_{r + 1}"] = p
                out[f"support_recall_{r + 1}"] = rc
                out[f"support_f1_{r + 1}"] = f1
        out.update(self.extras)
        return out

    def kv_lines(self) -> list[str]:
        """``name.key=value`` lines (floats at full precision)."""
        lines = []
        for key, val in self.scalars().items():
            if isinstance(val, float):  # builtin repr; numpy reprs are wrapped
                lines.append(f"{self.name}.{key}={float(val)!r}")
            else:
                lines.append(f"{self.name}.{key}={val}")
        return lines


def evaluate(
    name: str,
    a_hat,
    cube: HyperCube,
    lib: Library,
    a_true,
    z_hat=None,
    z_true=None,
) -> EvalReport:
    """Compute the full report for one estimate."""
    rp, ra = rmse(a_hat, a_true)
    ap, aa, askip = aad(a_hat, a_true)
    ep, ea = reconstruction_error(a_hat, cube, lib)
    sup = None
    if z_hat is not None and z_true is not None:
        sup = support_scores(z_hat, z_true)
    return EvalReport(
        name=name,
        rmse_per_pixel=rp,
        rmse_avg=ra,
        aad_per_pixel=ap,
        aad_avg=aa,
        aad_skipped=askip,
        re_per_pixel=ep,
        re_avg=ea,
        support=sup,
    )


def report_csv(reports: list[EvalReport]) -> str:
    """One CSV row per report; columns are the union of scalar keys."""
    keys: list[str] = []
    for rep in reports:
        for k in rep.scalars():
            if k not in keys:
                keys.append(k)
    lines = ["method," + ",".join(keys)]
    for rep in reports:
        vals = rep.scalars()
        cells = [rep.name]
        for k in keys:
            v = vals.get(k, "")
            cells.append(repr(float(v)) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
