"""Core domain types and the JSONL scene/prediction file formats.

Coordinate conventions shared by every module:
  ego frame    right-handed; origin at the perpendicular projection of the
               camera center onto the road; x lateral (right positive),
               y longitudinal (forward positive), z up.
  flat ground  the z = 0 plane of the ego frame; all 2D lane representations
               live here.

All types are immutable values after construction and validate their
invariants up front: operations reject bad input instead of normalizing it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, ParseError


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantViolation(msg)


@dataclass(frozen=True)
class Point3D:
    """Ego-frame point in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            _require(math.isfinite(getattr(self, name)), f"Point3D.{name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class Point2D:
    """Flat-ground point in meters."""

    x: float
    y: float

    def __post_init__(self):
        for name in ("x", "y"):
            _require(math.isfinite(getattr(self, name)), f"Point2D.{name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width_px: int
    height_px: int

    def __post_init__(self):
        _require(self.fx > 0 and self.fy > 0, "focal lengths must be positive")
        _require(self.width_px > 0 and self.height_px > 0, "image size must be positive")
        _require(0 <= self.cx < self.width_px, "cx must lie inside the image")
        _require(0 <= self.cy < self.height_px, "cy must lie inside the image")


@dataclass(frozen=True)
class CameraPose:
    """Camera at (0, 0, height_m) with pitch about the x-axis.

    Roll and yaw are zero by convention; positive pitch tilts the optical
    axis downward toward the road.
    """

    height_m: float
    pitch_rad: float
    intrinsics: Intrinsics

    def __post_init__(self):
        _require(self.height_m > 0, "camera height must be positive")
        _require(math.isfinite(self.pitch_rad), "pitch must be finite")


def _as_points(arr, ncols: int, lane_id: str) -> np.ndarray:
    pts = np.asarray(arr, dtype=float)
    if pts.size == 0:
        pts = pts.reshape(0, ncols)
    _require(pts.ndim == 2 and pts.shape[1] == ncols,
             f"lane '{lane_id}': points must be (N, {ncols})")
    _require(bool(np.all(np.isfinite(pts))), f"lane '{lane_id}': points must be finite")
    return pts


def _as_visibility(arr, n: int, lane_id: str) -> np.ndarray:
    vis = np.asarray(arr)
    _require(vis.shape == (n,),
             f"lane '{lane_id}': visibility length {vis.size} != point count {n}")
    # check before casting so fractional flags fail instead of truncating
    _require(bool(np.all((vis == 0) | (vis == 1))),
             f"lane '{lane_id}': visibility flags must be 0 or 1")
    return vis.astype(int)


def _check_monotone_y(y: np.ndarray, lane_id: str) -> None:
    _require(bool(np.all(np.diff(y) > 0)),
             f"lane '{lane_id}': points must be strictly increasing in y")


@dataclass(eq=False)
class Lane3D:
    """One lane boundary as an ordered 3D polyline with visibility flags."""

    id: str
    points: np.ndarray       # (N, 3) float
    visibility: np.ndarray   # (N,) int in {0, 1}

    def __post_init__(self):
        _require(bool(self.id), "lane id must be nonempty")
        self.points = _as_points(self.points, 3, self.id)
        _require(len(self.points) >= 1, f"lane '{self.id}': needs at least one point")
        _check_monotone_y(self.points[:, 1], self.id)
        self.visibility = _as_visibility(self.visibility, len(self.points), self.id)
        self.points.setflags(write=False)
        self.visibility.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Lane3D) and self.id == other.id
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.visibility, other.visibility))

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 2]

    def point(self, i: int) -> Point3D:
        return Point3D(*self.points[i])


@dataclass(eq=False)
class Lane2D:
    """One lane boundary on the flat ground plane."""

    id: str
    points: np.ndarray       # (N, 2) float
    visibility: np.ndarray   # (N,) int in {0, 1}

    def __post_init__(self):
        _require(bool(self.id), "lane id must be nonempty")
        self.points = _as_points(self.points, 2, self.id)
        _require(len(self.points) >= 1, f"lane '{self.id}': needs at least one point")
        _check_monotone_y(self.points[:, 1], self.id)
        self.visibility = _as_visibility(self.visibility, len(self.points), self.id)
        self.points.setflags(write=False)
        self.visibility.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Lane2D) and self.id == other.id
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.visibility, other.visibility))

    def point(self, i: int) -> Point2D:
        return Point2D(*self.points[i])


def _check_metadata(metadata: dict, owner: str) -> None:
    for k, v in metadata.items():
        _require(isinstance(k, str) and isinstance(v, str),
                 f"{owner}: metadata must map str to str")


@dataclass(eq=False)
class Scene:
    """One frame: camera pose plus ground-truth 3D lane boundaries."""

    frame_id: str
    camera: CameraPose
    lanes: list[Lane3D]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        _require(bool(self.frame_id), "frame_id must be nonempty")
        ids = [lane.id for lane in self.lanes]
        _require(len(set(ids)) == len(ids),
                 f"scene '{self.frame_id}': lane ids must be unique")
        _check_metadata(self.metadata, f"scene '{self.frame_id}'")

    def __eq__(self, other) -> bool:
        return (isinstance(other, Scene) and self.frame_id == other.frame_id
                and self.camera == other.camera and self.lanes == other.lanes
                and self.metadata == other.metadata)


@dataclass(eq=False)
class Anchor:
    """Column-anchor encoding of one lane: per y-reference, a lateral offset
    on the flat ground, a height, and a visibility value, plus one lane
    probability."""

    id: str
    x_offsets: np.ndarray   # (R,) meters, flat ground
    z: np.ndarray           # (R,) meters
    vis: np.ndarray         # (R,) in [0, 1]
    prob: float             # in [0, 1]

    def __post_init__(self):
        _require(bool(self.id), "anchor id must be nonempty")
        self.x_offsets = np.asarray(self.x_offsets, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.vis = np.asarray(self.vis, dtype=float)
        n = len(self.x_offsets)
        _require(self.z.shape == (n,) and self.vis.shape == (n,),
                 f"anchor '{self.id}': per-ref lists must share one length")
        _require(bool(np.all(np.isfinite(self.x_offsets)) and np.all(np.isfinite(self.z))),
                 f"anchor '{self.id}': values must be finite")
        _require(bool(np.all((self.vis >= 0) & (self.vis <= 1))),
                 f"anchor '{self.id}': vis must be within [0, 1]")
        _require(0.0 <= self.prob <= 1.0, f"anchor '{self.id}': prob must be within [0, 1]")

    def __eq__(self, other) -> bool:
        return (isinstance(other, Anchor) and self.id == other.id
                and np.array_equal(self.x_offsets, other.x_offsets)
                and np.array_equal(self.z, other.z)
                and np.array_equal(self.vis, other.vis)
                and self.prob == other.prob)


@dataclass(eq=False)
class AnchorSet:
    """Anchors for all lanes of one frame over a shared y-reference grid."""

    y_refs: np.ndarray      # (R,) strictly increasing
    anchors: list[Anchor]

    def __post_init__(self):
        self.y_refs = np.asarray(self.y_refs, dtype=float)
        _require(self.y_refs.ndim == 1 and len(self.y_refs) >= 1,
                 "y_refs must be a nonempty 1D list")
        _require(bool(np.all(np.diff(self.y_refs) > 0)), "y_refs must be strictly increasing")
        for a in self.anchors:
            _require(len(a.x_offsets) == len(self.y_refs),
                     f"anchor '{a.id}': per-ref lists must match y_refs length")

    def __eq__(self, other) -> bool:
        return (isinstance(other, AnchorSet)
                and np.array_equal(self.y_refs, other.y_refs)
                and self.anchors == other.anchors)


@dataclass
class PairMap:
    """Matched point indices between two lane boundaries, keyed on the
    shorter (driving) boundary."""

    pairs: dict[int, int]
    source_id: str
    target_id: str

    def __post_init__(self):
        keys = sorted(self.pairs)
        _require(len(keys) == len(self.pairs), "pair keys must be unique")
        vals = [self.pairs[k] for k in keys]
        _require(all(b >= a for a, b in zip(vals, vals[1:])),
                 "pair values must be nondecreasing as keys increase")

    def items_sorted(self) -> list[tuple[int, int]]:
        return sorted(self.pairs.items())

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(eq=False)
class TopViewMask:
    """Rasterized lane-boundary occupancy grid on the flat ground plane."""

    grid: np.ndarray          # (H, W) values in {0, 1}
    meters_per_cell: float
    origin: Point2D           # ground position of cell (ix=0, iy=0)
    thickness_cells: int

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.uint8)
        _require(self.grid.ndim == 2 and self.grid.shape[0] > 0 and self.grid.shape[1] > 0,
                 "mask grid must be 2D and nonempty")
        _require(bool(np.all((self.grid == 0) | (self.grid == 1))),
                 "mask cells must be 0 or 1")
        _require(self.meters_per_cell > 0, "meters_per_cell must be positive")
        _require(self.thickness_cells >= 1, "thickness_cells must be a positive integer")

    def __eq__(self, other) -> bool:
        return (isinstance(other, TopViewMask)
                and np.array_equal(self.grid, other.grid)
                and self.meters_per_cell == other.meters_per_cell
                and self.origin == other.origin
                and self.thickness_cells == other.thickness_cells)


@dataclass(eq=False)
class Prediction:
    """Predicted lanes for one frame: per-lane probability, optional anchor
    blocks mirroring AnchorSet."""

    frame_id: str
    camera: CameraPose
    lanes: list[Lane3D]
    probs: list[float]
    anchors: AnchorSet | None = None

    def __post_init__(self):
        _require(bool(self.frame_id), "frame_id must be nonempty")
        _require(len(self.probs) == len(self.lanes),
                 f"prediction '{self.frame_id}': one prob per lane required")
        _require(all(0.0 <= p <= 1.0 for p in self.probs),
                 f"prediction '{self.frame_id}': probs must be within [0, 1]")

    def __eq__(self, other) -> bool:
        return (isinstance(other, Prediction) and self.frame_id == other.frame_id
                and self.camera == other.camera and self.lanes == other.lanes
                and self.probs == other.probs and self.anchors == other.anchors)


@dataclass(eq=False)
class FlatFrame:
    """Flat-ground (virtual top view) lanes for one frame; the input format
    of the 2D-to-3D reconstruction stage."""

    frame_id: str
    camera: CameraPose
    lanes: list[Lane2D]

    def __post_init__(self):
        _require(bool(self.frame_id), "frame_id must be nonempty")
        ids = [lane.id for lane in self.lanes]
        _require(len(set(ids)) == len(ids),
                 f"frame '{self.frame_id}': lane ids must be unique")

    def __eq__(self, other) -> bool:
        return (isinstance(other, FlatFrame) and self.frame_id == other.frame_id
                and self.camera == other.camera and self.lanes == other.lanes)


# ---------------------------------------------------------------------------
# JSONL serialization.
#
# Canonical form: one frame per line, fixed key order, floats as Python's
# shortest round-trip decimals. write(read(write(x))) is byte-identical.

def camera_to_dict(cam: CameraPose) -> dict:
    k = cam.intrinsics
    return {
        "height_m": float(cam.height_m),
        "pitch_rad": float(cam.pitch_rad),
        "intrinsics": {
            "fx": float(k.fx), "fy": float(k.fy),
            "cx": float(k.cx), "cy": float(k.cy),
            "width_px": int(k.width_px), "height_px": int(k.height_px),
        },
    }


def camera_from_dict(d: dict) -> CameraPose:
    k = d["intrinsics"]
    return CameraPose(
        height_m=float(d["height_m"]),
        pitch_rad=float(d["pitch_rad"]),
        intrinsics=Intrinsics(fx=float(k["fx"]), fy=float(k["fy"]),
                              cx=float(k["cx"]), cy=float(k["cy"]),
                              width_px=int(k["width_px"]), height_px=int(k["height_px"])),
    )


def _lane3d_to_dict(lane: Lane3D) -> dict:
    return {
        "id": lane.id,
        "points": [[float(x), float(y), float(z)] for x, y, z in lane.points],
        "visibility": [int(v) for v in lane.visibility],
    }


def _lane3d_from_dict(d: dict) -> Lane3D:
    return Lane3D(id=d["id"], points=d["points"], visibility=d["visibility"])


def scene_to_dict(scene: Scene) -> dict:
    return {
        "frame_id": scene.frame_id,
        "camera": camera_to_dict(scene.camera),
        "lanes": [_lane3d_to_dict(lane) for lane in scene.lanes],
        "metadata": {k: scene.metadata[k] for k in sorted(scene.metadata)},
    }


def scene_from_dict(d: dict) -> Scene:
    return Scene(
        frame_id=d["frame_id"],
        camera=camera_from_dict(d["camera"]),
        lanes=[_lane3d_from_dict(ld) for ld in d["lanes"]],
        metadata=dict(d.get("metadata", {})),
    )


def _anchor_set_to_dict(aset: AnchorSet) -> dict:
    return {
        "y_refs": [float(y) for y in aset.y_refs],
        "anchors": [
            {
                "id": a.id,
                "x_offsets": [float(v) for v in a.x_offsets],
                "z": [float(v) for v in a.z],
                "vis": [float(v) for v in a.vis],
                "prob": float(a.prob),
            }
            for a in aset.anchors
        ],
    }


def _anchor_set_from_dict(d: dict) -> AnchorSet:
    anchors = [Anchor(id=a["id"], x_offsets=a["x_offsets"], z=a["z"],
                      vis=a["vis"], prob=float(a["prob"]))
               for a in d["anchors"]]
    return AnchorSet(y_refs=d["y_refs"], anchors=anchors)


def prediction_to_dict(pred: Prediction) -> dict:
    out = {
        "frame_id": pred.frame_id,
        "camera": camera_to_dict(pred.camera),
        "lanes": [
            {**_lane3d_to_dict(lane), "prob": float(p)}
            for lane, p in zip(pred.lanes, pred.probs)
        ],
    }
    if pred.anchors is not None:
        out["anchors"] = _anchor_set_to_dict(pred.anchors)
    return out


def prediction_from_dict(d: dict) -> Prediction:
    lanes = [_lane3d_from_dict(ld) for ld in d["lanes"]]
    probs = [float(ld.get("prob", 1.0)) for ld in d["lanes"]]
    anchors = _anchor_set_from_dict(d["anchors"]) if "anchors" in d else None
    return Prediction(frame_id=d["frame_id"], camera=camera_from_dict(d["camera"]),
                      lanes=lanes, probs=probs, anchors=anchors)


def flat_frame_to_dict(frame: FlatFrame) -> dict:
    return {
        "frame_id": frame.frame_id,
        "camera": camera_to_dict(frame.camera),
        "lanes": [
            {
                "id": lane.id,
                "points": [[float(x), float(y)] for x, y in lane.points],
                "visibility": [int(v) for v in lane.visibility],
            }
            for lane in frame.lanes
        ],
    }


def flat_frame_from_dict(d: dict) -> FlatFrame:
    lanes = [Lane2D(id=ld["id"], points=ld["points"], visibility=ld["visibility"])
             for ld in d["lanes"]]
    return FlatFrame(frame_id=d["frame_id"], camera=camera_from_dict(d["camera"]),
                     lanes=lanes)


def dumps_canonical(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _read_jsonl(path, from_dict):
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {e}") from e
            try:
                out.append(from_dict(raw))
            except InvariantViolation as e:
                raise InvariantViolation(f"{path}:{lineno}: {e}") from e
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{path}:{lineno}: malformed record: {e!r}") from e
    return out


def _write_jsonl(records, path, to_dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_canonical(to_dict(rec)))
            fh.write("\n")


def read_scenes(path) -> list[Scene]:
    """Read a scene JSONL file; raises on the first malformed line."""
    return _read_jsonl(path, scene_from_dict)


def write_scenes(scenes, path) -> None:
    """Write scenes in canonical JSONL form (bit-exact round trips)."""
    _write_jsonl(scenes, path, scene_to_dict)


def read_predictions(path) -> list[Prediction]:
    """Read a prediction JSONL file; lanes without "prob" default to 1."""
    return _read_jsonl(path, prediction_from_dict)


def write_predictions(preds, path) -> None:
    _write_jsonl(preds, path, prediction_to_dict)


def read_flat_frames(path) -> list[FlatFrame]:
    return _read_jsonl(path, flat_frame_from_dict)


def write_flat_frames(frames, path) -> None:
    _write_jsonl(frames, path, flat_frame_to_dict)
