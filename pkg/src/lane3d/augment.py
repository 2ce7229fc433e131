"""Rotation augmentation of 3D lane scenes about the pitch, roll and yaw axes.

Each axis fires independently with its own probability and draws a uniform
angle from its range. Randomness comes from a counter-based stream keyed by
(seed, frame_id, draw_index), so augmentation is reproducible and can be
applied to scenes in parallel without shared state.

Angle units: the shipped defaults follow the reference training setup, whose
ranges strongly suggest radians for pitch ([-0.1, 0.3]) and degrees for roll
and yaw ([-3, 3]). The unit is explicit per axis in the config rather than
guessed; pass a single string to force one unit everywhere.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .model import Lane3D, Scene
from .projection import compute_visibility

_AXES = ("pitch", "roll", "yaw")
_UNITS = ("radians", "degrees")


def _default_units() -> dict:
    return {"pitch": "radians", "roll": "degrees", "yaw": "degrees"}


@dataclass(frozen=True)
class AugmentConfig:
    pitch_range: tuple[float, float] = (-0.1, 0.3)
    roll_range: tuple[float, float] = (-3.0, 3.0)
    yaw_range: tuple[float, float] = (-3.0, 3.0)
    p_pitch: float = 0.1
    p_roll: float = 0.05
    p_yaw: float = 0.2
    angle_unit: object = field(default_factory=_default_units)  # str or per-axis dict
    seed: int = 0

    def __post_init__(self):
        for axis in _AXES:
            lo, hi = getattr(self, f"{axis}_range")
            if not lo <= hi:
                raise InvalidInput(f"{axis}_range must satisfy lo <= hi")
            p = getattr(self, f"p_{axis}")
            if not 0.0 <= p <= 1.0:
                raise InvalidInput(f"p_{axis} must be within [0, 1]")
            if self.unit_for(axis) not in _UNITS:
                raise InvalidInput(f"angle unit for {axis} must be one of {_UNITS}")

    def unit_for(self, axis: str) -> str:
        if isinstance(self.angle_unit, str):
            return self.angle_unit
        return self.angle_unit.get(axis, "radians")

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        kwargs = {}
        for axis in _AXES:
            key = f"{axis}_range"
            if key in d:
                kwargs[key] = tuple(float(v) for v in d[key])
            pkey = f"p_{axis}"
            if pkey in d:
                kwargs[pkey] = float(d[pkey])
        if "angle_unit" in d:
            kwargs["angle_unit"] = d["angle_unit"]
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "AugmentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def rot_x(angle: float) -> np.ndarray:
    """Rotation about the x (pitch) axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0],
                     [0.0, c, -s],
                     [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    """Rotation about the y (roll) axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s],
                     [0.0, 1.0, 0.0],
                     [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    """Rotation about the z (yaw) axis; preserves every point's height."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0],
                     [s, c, 0.0],
                     [0.0, 0.0, 1.0]])


def _stream(seed: int, frame_id: str, draw_index: int) -> np.random.Generator:
    key = f"{seed}:{frame_id}:{draw_index}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def draw_angles(cfg: AugmentConfig, frame_id: str, draw_index: int) -> dict[str, float]:
    """Deterministic per-axis rotation angles in radians; 0 where the axis
    does not fire. Both the gate and the angle are always drawn, so the
    stream stays aligned across configs with different probabilities."""
    rng = _stream(cfg.seed, frame_id, draw_index)
    angles = {}
    for axis in _AXES:
        gate = rng.uniform()
        lo, hi = getattr(cfg, f"{axis}_range")
        value = rng.uniform(lo, hi)
        if gate < getattr(cfg, f"p_{axis}"):
            if cfg.unit_for(axis) == "degrees":
                value = math.radians(value)
            angles[axis] = value
        else:
            angles[axis] = 0.0
    return angles


def composed_rotation(pitch: float, roll: float, yaw: float) -> np.ndarray:
    """Fixed composition order: yaw about z, then roll about y, then pitch
    about x applied first (R = R_z R_y R_x)."""
    return rot_z(yaw) @ rot_y(roll) @ rot_x(pitch)


def rotate_scene(scene: Scene, rotation: np.ndarray,
                 metadata: dict[str, str] | None = None) -> Scene:
    """Rotate all lane points, recompute front-view visibility, keep the
    camera pose. Points may end up above the camera height; they stay valid
    scene data and only fail later if projected to the virtual top view."""
    lanes = []
    for lane in scene.lanes:
        pts = lane.points @ rotation.T
        new_lane = Lane3D(id=lane.id, points=pts, visibility=np.zeros(len(pts), dtype=int))
        lanes.append(Lane3D(id=lane.id, points=pts,
                            visibility=compute_visibility(new_lane, scene.camera)))
    merged = dict(scene.metadata)
    if metadata:
        merged.update(metadata)
    return Scene(frame_id=scene.frame_id, camera=scene.camera, lanes=lanes,
                 metadata=merged)


def augment_scene(scene: Scene, cfg: AugmentConfig, draw_index: int = 0) -> Scene:
    """Apply the drawn rotations for (cfg.seed, frame_id, draw_index).

    Returns the scene unchanged when no axis fires; otherwise records the
    applied angles (radians) in the scene metadata.
    """
    angles = draw_angles(cfg, scene.frame_id, draw_index)
    if all(a == 0.0 for a in angles.values()):
        return scene
    rotation = composed_rotation(angles["pitch"], angles["roll"], angles["yaw"])
    meta = {f"augment_{axis}_rad": repr(angles[axis]) for axis in _AXES}
    return rotate_scene(scene, rotation, metadata=meta)


def inverse_of(rotation: np.ndarray) -> np.ndarray:
    """Inverse of a rotation matrix (its transpose)."""
    return np.asarray(rotation).T


DEFAULT_CONFIG = AugmentConfig()
