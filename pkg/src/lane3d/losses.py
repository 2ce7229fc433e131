"""Distance definitions and loss functions on lane pairs and anchors.

Width distances follow the flat-ground derivation: D_3D is the plain 3D
Euclidean pair distance, and D_2D is the flat-ground distance of the two
virtual top-view projections weighted by (h_cam - z_mean). When both
endpoints share a height, D_2D equals the 3D width times the camera height
exactly, which is what makes flat-ground width a readable proxy for height.

The geometry-prior loss penalizes the absolute second difference of each
width series along the lane: constant and linearly drifting widths cost
nothing, steps and kinks are charged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, MismatchedAnchors
from .model import AnchorSet, Lane3D, PairMap, Point3D
from .projection import project_virtual_top

BCE_EPS = 1e-7


def dist3d(a: Point3D, b: Point3D) -> float:
    """Euclidean distance between two ego-frame points."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def dist2d_weighted(a: Point3D, b: Point3D, h_cam: float) -> float:
    """Flat-ground distance of the virtual top-view projections of a and b,
    weighted by (h_cam - z_mean). Requires both heights below the camera."""
    pa = project_virtual_top(a, h_cam)
    pb = project_virtual_top(b, h_cam)
    z_mean = 0.5 * (a.z + b.z)
    flat = math.hypot(pa.x - pb.x, pa.y - pb.y)
    return flat * (h_cam - z_mean)


@dataclass(eq=False)
class WidthSeries:
    """Per-pair width measurements along one lane, in pair order."""

    d3: np.ndarray    # meters
    d2: np.ndarray    # weighted meters
    mask: np.ndarray  # {0, 1}, AND of endpoint visibilities

    def __post_init__(self):
        self.d3 = np.asarray(self.d3, dtype=float)
        self.d2 = np.asarray(self.d2, dtype=float)
        self.mask = np.asarray(self.mask, dtype=int)
        if not (len(self.d3) == len(self.d2) == len(self.mask)):
            raise InvalidInput("width series must have equal lengths")
        if np.any(self.d3 < 0) or np.any(self.d2 < 0):
            raise InvalidInput("width distances must be nonnegative")

    def __len__(self) -> int:
        return len(self.d3)


def width_series(left: Lane3D, right: Lane3D, pairs: PairMap, h_cam: float) -> WidthSeries:
    """Evaluate D_3D and D_2D for every matched pair, in key order."""
    by_id = {left.id: left, right.id: right}
    if pairs.source_id not in by_id or pairs.target_id not in by_id:
        raise InvalidInput(
            f"pair map connects '{pairs.source_id}'->'{pairs.target_id}', "
            f"got lanes '{left.id}' and '{right.id}'")
    src = by_id[pairs.source_id]
    tgt = by_id[pairs.target_id]
    d3, d2, mask = [], [], []
    for i, j in pairs.items_sorted():
        a, b = src.point(i), tgt.point(j)
        d3.append(dist3d(a, b))
        d2.append(dist2d_weighted(a, b, h_cam))
        mask.append(int(src.visibility[i] and tgt.visibility[j]))
    return WidthSeries(d3=np.array(d3), d2=np.array(d2), mask=np.array(mask, dtype=int))


def second_difference_l1(values: np.ndarray, mask: np.ndarray | None = None,
                         weight: float = 1.0) -> float:
    """Sum of weight * |mask_i * (v[i-1] + v[i+1] - 2 v[i])| over interior i."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        return 0.0
    t = v[:-2] + v[2:] - 2.0 * v[1:-1]
    if mask is not None:
        t = t * np.asarray(mask)[1:-1]
    return float(weight * np.sum(np.abs(t)))


def geo_prior_loss(series: WidthSeries, prob: float) -> float:
    """Geometry-prior loss: probability-weighted L1 of the second differences
    of both width series over the visible span. Zero for fewer than 3 pairs."""
    return (second_difference_l1(series.d2, series.mask, prob)
            + second_difference_l1(series.d3, series.mask, prob))


def anchor_loss(pred: AnchorSet, gt: AnchorSet) -> float:
    """Anchor regression loss: probability cross-entropy, visibility-masked
    L1 on x and z, and probability-masked L1 on visibility.

    Log arguments are floored at 1e-7, so exact {0, 1} probabilities still
    give an exactly zero cross-entropy term.
    """
    if not np.array_equal(pred.y_refs, gt.y_refs):
        raise MismatchedAnchors("prediction and ground truth use different y_refs")
    if len(pred.anchors) != len(gt.anchors):
        raise MismatchedAnchors(
            f"anchor count mismatch: {len(pred.anchors)} vs {len(gt.anchors)}")
    total = 0.0
    for a, g in zip(pred.anchors, gt.anchors):
        p, p_hat = a.prob, g.prob
        total -= p_hat * math.log(max(p, BCE_EPS)) \
            + (1.0 - p_hat) * math.log(max(1.0 - p, BCE_EPS))
        total += p_hat * float(np.sum(g.vis * np.abs(a.x_offsets - g.x_offsets)))
        total += p_hat * float(np.sum(g.vis * np.abs(a.z - g.z)))
        total += p_hat * float(np.sum(np.abs(a.vis - g.vis)))
    return total


def cam_loss(pred_pitch: float, pred_h: float, gt_pitch: float, gt_h: float) -> float:
    """L1 error on camera pitch and height."""
    return abs(pred_pitch - gt_pitch) + abs(pred_h - gt_h)


@dataclass(frozen=True)
class LossWeights:
    lambda_geo: float = 1e-2
    lambda_cam: float = 1e2

    def __post_init__(self):
        if self.lambda_geo < 0 or self.lambda_cam < 0:
            raise InvalidInput("loss weights must be nonnegative")


def total_rec_loss(anchor: float, geo: float, w: LossWeights) -> float:
    """Reconstruction loss: anchor term plus weighted geometry prior."""
    return anchor + w.lambda_geo * geo


def geo_prior_of_heights(z: np.ndarray, left_flat: np.ndarray, right_flat: np.ndarray,
                         h_cam: float, prob: float = 1.0,
                         mask: np.ndarray | None = None):
    """Geometry-prior loss as a function of pair heights, with its analytic
    gradient.

    z concatenates the left and right heights of N index-aligned pairs whose
    flat-ground coordinates are fixed; the widths are those of the lifted
    points. The value equals geo_prior_loss on the induced width series. The
    |.|_1 subgradient at zero is taken as 0.
    """
    left_flat = np.asarray(left_flat, dtype=float)
    right_flat = np.asarray(right_flat, dtype=float)
    n = len(left_flat)
    zl, zr = z[:n], z[n:]
    h = h_cam
    ax, ay = left_flat[:, 0], left_flat[:, 1]
    bx, by = right_flat[:, 0], right_flat[:, 1]

    ux = ax * (h - zl) / h - bx * (h - zr) / h
    uy = ay * (h - zl) / h - by * (h - zr) / h
    uz = zl - zr
    w3 = np.sqrt(ux * ux + uy * uy + uz * uz)
    inv_w3 = 1.0 / np.maximum(w3, 1e-12)
    dw3_dzl = (-ux * ax / h - uy * ay / h + uz) * inv_w3
    dw3_dzr = (ux * bx / h + uy * by / h - uz) * inv_w3

    d_flat = np.hypot(ax - bx, ay - by)
    w2 = d_flat * (h - 0.5 * (zl + zr))

    m = np.ones(n) if mask is None else np.asarray(mask, dtype=float)
    value = 0.0
    g_w3 = np.zeros(n)
    g_w2 = np.zeros(n)
    for series, g_out in ((w3, g_w3), (w2, g_w2)):
        if n < 3:
            continue
        t = (series[:-2] + series[2:] - 2.0 * series[1:-1]) * m[1:-1]
        value += prob * float(np.sum(np.abs(t)))
        s = prob * np.sign(t) * m[1:-1]
        g_out[:-2] += s
        g_out[2:] += s
        g_out[1:-1] -= 2.0 * s
    grad = np.concatenate([g_w3 * dw3_dzl - 0.5 * g_w2 * d_flat,
                           g_w3 * dw3_dzr - 0.5 * g_w2 * d_flat])
    return value, grad


def grad_check(loss_fn, point, eps: float = 1e-6) -> float:
    """Compare an analytic gradient against central finite differences.

    loss_fn maps a flat parameter vector to (value, gradient). Returns the
    maximum over coordinates of |analytic - numeric| / max(|analytic|,
    |numeric|, 1e-8).
    """
    x = np.asarray(point, dtype=float)
    _, analytic = loss_fn(x)
    analytic = np.asarray(analytic, dtype=float)
    worst = 0.0
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = eps
        f_plus, _ = loss_fn(x + step)
        f_minus, _ = loss_fn(x - step)
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic.flat[i])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
