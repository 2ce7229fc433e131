"""Greedy sliding-window matching of point pairs between two lane boundaries.

The matcher seeds at the middle of the shorter boundary, finds its partner
within +/- window of the same-y index on the longer boundary, then walks
backward and forward with a window anchored at the previous match. A pair
whose width jumps by more than the threshold against the previously matched
width rejects the whole pairing (returned as None, mirroring a NULL result):
lane width may drift gradually but not step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .model import Lane3D, PairMap


@dataclass(frozen=True)
class PairingConfig:
    window: int = 2                      # sliding-window half width
    width_jump_threshold: float = 1.0    # meters

    def __post_init__(self):
        if self.window < 1:
            raise InvalidInput("pairing window must be >= 1")
        if self.width_jump_threshold <= 0:
            raise InvalidInput("width_jump_threshold must be positive")


DEFAULT_PAIRING = PairingConfig()


def _pair_dists(p: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    return np.linalg.norm(candidates - p, axis=1)


def _windowed_argmin(p: np.ndarray, pts: np.ndarray, lo: int, hi: int) -> tuple[int, float]:
    """Best index in [lo, hi]; ties go to the smaller index."""
    d = _pair_dists(p, pts[lo:hi + 1])
    k = int(np.argmin(d))
    return lo + k, float(d[k])


def match_point_pairs(l1: Lane3D, l2: Lane3D, cfg: PairingConfig = DEFAULT_PAIRING):
    """Match point pairs between two boundaries; returns a PairMap keyed on
    the shorter boundary, or None when a local width jump rejects the pair.

    The result is independent of argument order: the shorter boundary always
    drives, with the smaller lane id breaking length ties.
    """
    if len(l1) < 3 or len(l2) < 3:
        raise InvalidInput("point-pair matching needs at least 3 points per boundary")
    if (len(l1), l1.id) > (len(l2), l2.id):
        l1, l2 = l2, l1

    pts1, pts2 = l1.points, l2.points
    n1, n2 = len(pts1), len(pts2)
    eta = cfg.window

    mid1 = n1 // 2
    same_y = int(np.argmin(np.abs(pts2[:, 1] - pts1[mid1, 1])))
    lo, hi = max(0, same_y - eta), min(n2 - 1, same_y + eta)
    mid2, seed_width = _windowed_argmin(pts1[mid1], pts2, lo, hi)

    pairs = {mid1: mid2}

    prev, prev_width = mid2, seed_width
    for i in range(mid1 - 1, -1, -1):
        lo, hi = max(0, prev - eta), prev - 1
        if hi < lo:
            break
        j, width = _windowed_argmin(pts1[i], pts2, lo, hi)
        if abs(width - prev_width) > cfg.width_jump_threshold:
            return None
        pairs[i] = j
        prev, prev_width = j, width

    prev, prev_width = mid2, seed_width
    for i in range(mid1 + 1, n1):
        lo, hi = prev + 1, min(n2 - 1, prev + eta)
        if hi < lo:
            break
        j, width = _windowed_argmin(pts1[i], pts2, lo, hi)
        if abs(width - prev_width) > cfg.width_jump_threshold:
            return None
        pairs[i] = j
        prev, prev_width = j, width

    return PairMap(pairs=dict(sorted(pairs.items())), source_id=l1.id, target_id=l2.id)


def adjacent_index_pairs(l1: Lane3D, l2: Lane3D) -> PairMap:
    """Anchor-index pairing: each point i of l1 pairs with the closest of
    l2's indices {i-1, i, i+1}; no rejection logic. Both lanes must share an
    anchor-index domain for this to be meaningful."""
    if len(l1) == 0 or len(l2) == 0:
        raise InvalidInput("cannot pair empty lanes")
    pts1, pts2 = l1.points, l2.points
    n2 = len(pts2)
    pairs = {}
    for i in range(len(pts1)):
        cands = [j for j in (i - 1, i, i + 1) if 0 <= j < n2]
        if not cands:
            continue
        dists = [float(np.linalg.norm(pts1[i] - pts2[j])) for j in cands]
        pairs[i] = cands[int(np.argmin(dists))]
    return PairMap(pairs=pairs, source_id=l1.id, target_id=l2.id)
