"""Detection evaluation: min-cost lane matching, F-score/AP, near/far offset
errors, the joint metric, and the dataset splits.

Lanes are resampled at the evaluation y-references on the flat ground plane
(linear interpolation of flat x and of height z against flat y, visibility
interpolated and thresholded at 0.5). A GT/prediction edge is admissible
when at least match_fraction of the co-visible references lie within
point_tolerance; the assignment then maximizes the number of admissible
matches and, among those, minimizes the total mean pointwise distance.
Near/far buckets split at y = 40 m: y < 40 is near, y >= 40 is far.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInput
from .model import Lane3D, Prediction, Scene
from .projection import project_virtual_top_xy

DEFAULT_EVAL_Y_REFS = (5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0)
DEFAULT_PROB_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(1, 20))

EXTRA_LONG_MIN_Y = 195.0
EXTRA_LONG_Y_REFS = tuple(float(y) for y in range(5, 201, 5))
HARD_Z_THRESHOLD = 1.78


@dataclass(frozen=True)
class MatchConfig:
    point_tolerance: float = 1.5
    match_fraction: float = 0.75
    eval_y_refs: tuple = DEFAULT_EVAL_Y_REFS
    near_far_split: float = 40.0
    prob_thresholds: tuple = DEFAULT_PROB_THRESHOLDS

    def __post_init__(self):
        if self.point_tolerance <= 0:
            raise InvalidInput("point_tolerance must be positive")
        if not 0.0 <= self.match_fraction <= 1.0:
            raise InvalidInput("match_fraction must be within [0, 1]")
        refs = np.asarray(self.eval_y_refs, dtype=float)
        if refs.size == 0 or not np.all(np.diff(refs) > 0):
            raise InvalidInput("eval_y_refs must be nonempty and strictly increasing")
        if not self.prob_thresholds:
            raise InvalidInput("prob_thresholds must be nonempty")

    @classmethod
    def from_dict(cls, d: dict) -> "MatchConfig":
        kwargs = {}
        for key in ("point_tolerance", "match_fraction", "near_far_split"):
            if key in d:
                kwargs[key] = float(d[key])
        for key in ("eval_y_refs", "prob_thresholds"):
            if key in d:
                kwargs[key] = tuple(float(v) for v in d[key])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "MatchConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def resample_flat(lane: Lane3D, h_cam: float, y_refs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Resample a lane at flat-ground y references: returns (x_flat, z, vis)
    with vis False outside the lane's flat span."""
    refs = np.asarray(y_refs, dtype=float)
    flat = project_virtual_top_xy(lane.xy, lane.z, h_cam)
    fy = flat[:, 1]
    if not np.all(np.diff(fy) > 0):
        raise InvalidInput(
            f"lane '{lane.id}': flat-ground y not strictly increasing")
    x = np.interp(refs, fy, flat[:, 0])
    z = np.interp(refs, fy, lane.z)
    v = np.interp(refs, fy, lane.visibility.astype(float))
    vis = (v >= 0.5) & (refs >= fy[0]) & (refs <= fy[-1])
    return x, z, vis


@dataclass
class PairStats:
    """Per-matched-pair offset sums, bucketed near/far, for aggregation and
    for the joint metric's set intersection."""

    frame_id: str
    gt_id: str
    pred_id: str
    cost: float
    x_near_sum: float
    x_far_sum: float
    z_near_sum: float
    z_far_sum: float
    near_count: int
    far_count: int


@dataclass
class FrameMatching:
    frame_id: str
    matches: list[tuple[int, int, float]]   # (gt index, pred index, cost)
    unmatched_gt: list[int]
    unmatched_pred: list[int]
    pair_stats: list[PairStats]

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def _assignment(cost: np.ndarray, admissible: np.ndarray) -> list[tuple[int, int]]:
    """Maximize the number of admissible matches, then minimize total cost.

    Realized as an exact assignment solve on a padded square matrix where
    leaving a lane unmatched costs BIG and an inadmissible match costs more
    than two unmatched lanes, so it is never chosen.
    """
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    big = 1.0 + float(np.sum(cost[admissible])) if np.any(admissible) else 1.0
    size = n + m
    padded = np.zeros((size, size))
    padded[:n, :m] = np.where(admissible, cost, 4.0 * big)
    padded[:n, m:] = big
    padded[n:, :m] = big
    rows, cols = linear_sum_assignment(padded)
    out = []
    for r, c in zip(rows, cols):
        if r < n and c < m and admissible[r, c]:
            out.append((int(r), int(c)))
    return out


def match_lanes(gt: list[Lane3D], pred: list[tuple[Lane3D, float]],
                cfg: MatchConfig, h_cam: float, frame_id: str = "") -> FrameMatching:
    """Min-cost matching between GT and predicted lanes of one frame.

    Predictions arrive as (lane, prob) tuples already filtered at the
    caller's probability threshold; edge cost is the mean pointwise
    flat-ground/height distance over co-visible references.
    """
    refs = np.asarray(cfg.eval_y_refs, dtype=float)
    gt_rs = [resample_flat(lane, h_cam, refs) for lane in gt]
    pred_rs = [resample_flat(lane, h_cam, refs) for lane, _ in pred]

    n, m = len(gt), len(pred)
    cost = np.full((n, m), np.inf)
    admissible = np.zeros((n, m), dtype=bool)
    dist_cache = {}
    for gi, (gx, gz, gvis) in enumerate(gt_rs):
        for pi, (px, pz, pvis) in enumerate(pred_rs):
            covis = gvis & pvis
            if not np.any(covis):
                continue
            d = np.sqrt((gx[covis] - px[covis]) ** 2 + (gz[covis] - pz[covis]) ** 2)
            cost[gi, pi] = float(np.mean(d))
            admissible[gi, pi] = float(np.mean(d <= cfg.point_tolerance)) >= cfg.match_fraction
            dist_cache[(gi, pi)] = (covis, d)

    cost_for_solver = np.where(np.isfinite(cost), cost, 0.0)
    matches = _assignment(cost_for_solver, admissible)

    far = refs >= cfg.near_far_split
    stats = []
    out_matches = []
    for gi, pi in matches:
        covis, _ = dist_cache[(gi, pi)]
        gx, gz, _ = gt_rs[gi]
        px, pz, _ = pred_rs[pi]
        dx = np.abs(gx - px)
        dz = np.abs(gz - pz)
        near_sel = covis & ~far
        far_sel = covis & far
        stats.append(PairStats(
            frame_id=frame_id, gt_id=gt[gi].id, pred_id=pred[pi][0].id,
            cost=cost[gi, pi],
            x_near_sum=float(np.sum(dx[near_sel])), x_far_sum=float(np.sum(dx[far_sel])),
            z_near_sum=float(np.sum(dz[near_sel])), z_far_sum=float(np.sum(dz[far_sel])),
            near_count=int(np.sum(near_sel)), far_count=int(np.sum(far_sel))))
        out_matches.append((gi, pi, float(cost[gi, pi])))

    matched_gt = {gi for gi, _, _ in out_matches}
    matched_pred = {pi for _, pi, _ in out_matches}
    return FrameMatching(
        frame_id=frame_id,
        matches=out_matches,
        unmatched_gt=[i for i in range(n) if i not in matched_gt],
        unmatched_pred=[i for i in range(m) if i not in matched_pred],
        pair_stats=stats)


@dataclass(frozen=True)
class FScore:
    precision: float
    recall: float
    f_score: float


def fscore_from_counts(tp: int, fp: int, fn: int) -> FScore:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return FScore(precision=precision, recall=recall, f_score=f)


def compute_fscore(matchings: list[FrameMatching]) -> FScore:
    """Precision/recall/F over matchings computed for one prob threshold."""
    tp = sum(m.tp for m in matchings)
    fp = sum(m.fp for m in matchings)
    fn = sum(m.fn for m in matchings)
    return fscore_from_counts(tp, fp, fn)


def compute_ap(pr_points) -> float:
    """Interpolated average precision from (precision, recall) pairs: the
    area under the monotone precision envelope over recall, from recall 0."""
    pts = sorted(((float(r), float(p)) for p, r in pr_points))
    if not pts:
        return 0.0
    recalls = [r for r, _ in pts]
    precisions = [p for _, p in pts]
    env = precisions[:]
    for i in range(len(env) - 2, -1, -1):
        env[i] = max(env[i], env[i + 1])
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recalls, env):
        ap += (r - prev_r) * p
        prev_r = r
    return ap


@dataclass(frozen=True)
class OffsetErrors:
    x_near: float
    x_far: float
    z_near: float
    z_far: float
    empty: bool          # no matched pairs contributed


def compute_offset_errors(pair_stats: list[PairStats]) -> OffsetErrors:
    """Mean absolute flat-ground x and height z errors over matched pairs'
    co-visible references; the near/far bucketing was fixed at match time."""
    xn = sum(s.x_near_sum for s in pair_stats)
    xf = sum(s.x_far_sum for s in pair_stats)
    zn = sum(s.z_near_sum for s in pair_stats)
    zf = sum(s.z_far_sum for s in pair_stats)
    cn = sum(s.near_count for s in pair_stats)
    cf = sum(s.far_count for s in pair_stats)
    return OffsetErrors(
        x_near=xn / cn if cn else 0.0,
        x_far=xf / cf if cf else 0.0,
        z_near=zn / cn if cn else 0.0,
        z_far=zf / cf if cf else 0.0,
        empty=not pair_stats)


@dataclass
class FrameBreakdown:
    frame_id: str
    tp: int
    fp: int
    fn: int
    pair_stats: list[PairStats]


@dataclass
class EvalReport:
    f_score: float
    ap: float
    precision: float
    recall: float
    best_threshold: float
    x_err_near: float
    x_err_far: float
    z_err_near: float
    z_err_far: float
    empty: bool
    matched_pairs: list[tuple[str, str, str]]     # (frame_id, gt id, pred id)
    per_frame: list[FrameBreakdown]
    pr_curve: list[tuple[float, float, float]]    # (threshold, precision, recall)

    def to_dict(self) -> dict:
        return {
            "f_score": self.f_score,
            "ap": self.ap,
            "precision": self.precision,
            "recall": self.recall,
            "best_threshold": self.best_threshold,
            "x_err_near": self.x_err_near,
            "x_err_far": self.x_err_far,
            "z_err_near": self.z_err_near,
            "z_err_far": self.z_err_far,
            "empty": self.empty,
            "matched_pairs": [list(t) for t in self.matched_pairs],
            "pr_curve": [list(t) for t in self.pr_curve],
            "per_frame": [
                {
                    "frame_id": fb.frame_id,
                    "tp": fb.tp, "fp": fb.fp, "fn": fb.fn,
                    "pairs": [
                        {
                            "gt_id": s.gt_id, "pred_id": s.pred_id, "cost": s.cost,
                            "x_near_sum": s.x_near_sum, "x_far_sum": s.x_far_sum,
                            "z_near_sum": s.z_near_sum, "z_far_sum": s.z_far_sum,
                            "near_count": s.near_count, "far_count": s.far_count,
                        }
                        for s in fb.pair_stats
                    ],
                }
                for fb in self.per_frame
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        per_frame = [
            FrameBreakdown(
                frame_id=fb["frame_id"], tp=fb["tp"], fp=fb["fp"], fn=fb["fn"],
                pair_stats=[
                    PairStats(frame_id=fb["frame_id"], gt_id=p["gt_id"],
                              pred_id=p["pred_id"], cost=p["cost"],
                              x_near_sum=p["x_near_sum"], x_far_sum=p["x_far_sum"],
                              z_near_sum=p["z_near_sum"], z_far_sum=p["z_far_sum"],
                              near_count=p["near_count"], far_count=p["far_count"])
                    for p in fb["pairs"]
                ])
            for fb in d["per_frame"]
        ]
        return cls(
            f_score=d["f_score"], ap=d["ap"], precision=d["precision"],
            recall=d["recall"], best_threshold=d["best_threshold"],
            x_err_near=d["x_err_near"], x_err_far=d["x_err_far"],
            z_err_near=d["z_err_near"], z_err_far=d["z_err_far"],
            empty=d["empty"],
            matched_pairs=[tuple(t) for t in d["matched_pairs"]],
            per_frame=per_frame,
            pr_curve=[tuple(t) for t in d["pr_curve"]])


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def read_report(path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        return EvalReport.from_dict(json.load(fh))


def write_report_csv(report: EvalReport, path) -> None:
    """Optional per-frame CSV breakdown."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame_id,tp,fp,fn,x_near,x_far,z_near,z_far\n")
        for fb in report.per_frame:
            e = compute_offset_errors(fb.pair_stats)
            fh.write(f"{fb.frame_id},{fb.tp},{fb.fp},{fb.fn},"
                     f"{e.x_near},{e.x_far},{e.z_near},{e.z_far}\n")


def evaluate_frames(gt_scenes: list[Scene], predictions: list[Prediction],
                    cfg: MatchConfig = MatchConfig()) -> EvalReport:
    """Full protocol over aligned frames: sweep the probability thresholds,
    report AP over the sweep and the metrics of the best-F threshold."""
    pred_by_frame = {p.frame_id: p for p in predictions}
    missing = [s.frame_id for s in gt_scenes if s.frame_id not in pred_by_frame]
    if missing:
        raise InvalidInput(f"predictions missing for frames: {', '.join(missing)}")

    sweeps = []
    for threshold in cfg.prob_thresholds:
        matchings = []
        for scene in gt_scenes:
            pred = pred_by_frame[scene.frame_id]
            kept = [(lane, prob) for lane, prob in zip(pred.lanes, pred.probs)
                    if prob >= threshold]
            matchings.append(match_lanes(scene.lanes, kept, cfg,
                                         scene.camera.height_m, scene.frame_id))
        sweeps.append((threshold, compute_fscore(matchings), matchings))

    ap = compute_ap([(fs.precision, fs.recall) for _, fs, _ in sweeps])
    best_threshold, best_fs, best_matchings = max(
        sweeps, key=lambda item: (item[1].f_score, -item[0]))

    all_stats = [s for m in best_matchings for s in m.pair_stats]
    offsets = compute_offset_errors(all_stats)
    return EvalReport(
        f_score=best_fs.f_score, ap=ap, precision=best_fs.precision,
        recall=best_fs.recall, best_threshold=best_threshold,
        x_err_near=offsets.x_near, x_err_far=offsets.x_far,
        z_err_near=offsets.z_near, z_err_far=offsets.z_far,
        empty=offsets.empty,
        matched_pairs=[(s.frame_id, s.gt_id, s.pred_id) for s in all_stats],
        per_frame=[FrameBreakdown(frame_id=m.frame_id, tp=m.tp, fp=m.fp, fn=m.fn,
                                  pair_stats=m.pair_stats) for m in best_matchings],
        pr_curve=[(t, fs.precision, fs.recall) for t, fs, _ in sweeps])


@dataclass(frozen=True)
class JointErrors:
    x_far: float
    z_far: float
    pair_count: int
    empty_intersection: bool


def joint_offset_errors(reports: list[EvalReport]) -> list[JointErrors]:
    """Far offset errors recomputed on the intersection of GT lanes matched
    by every report; restricted to one report this equals its own errors."""
    if not reports:
        raise InvalidInput("joint metric needs at least one report")
    key_sets = []
    for rep in reports:
        key_sets.append({(s.frame_id, s.gt_id)
                         for fb in rep.per_frame for s in fb.pair_stats})
    common = set.intersection(*key_sets)
    out = []
    for rep in reports:
        stats = [s for fb in rep.per_frame for s in fb.pair_stats
                 if (s.frame_id, s.gt_id) in common]
        xf = sum(s.x_far_sum for s in stats)
        zf = sum(s.z_far_sum for s in stats)
        cf = sum(s.far_count for s in stats)
        out.append(JointErrors(x_far=xf / cf if cf else 0.0,
                               z_far=zf / cf if cf else 0.0,
                               pair_count=len(stats),
                               empty_intersection=not common))
    return out


def split_extra_long(scenes: list[Scene]):
    """Scenes reaching beyond 195 m, with the extended 5..200 m reference
    grid (40 references) for evaluating them."""
    kept = [s for s in scenes
            if any(float(np.max(lane.points[:, 1])) > EXTRA_LONG_MIN_Y
                   for lane in s.lanes)]
    return kept, EXTRA_LONG_Y_REFS


def split_hard_easy(scenes: list[Scene], z_threshold: float = HARD_Z_THRESHOLD):
    """Hard scenes contain some lane point with |z| strictly above the
    threshold (default: the camera height of the reference dataset)."""
    if z_threshold <= 0:
        raise InvalidInput("z_threshold must be positive")
    hard, easy = [], []
    for s in scenes:
        is_hard = any(float(np.max(np.abs(lane.z))) > z_threshold for lane in s.lanes)
        (hard if is_hard else easy).append(s)
    return hard, easy
