"""Condition vocabulary and per-condition motion feature extractors.

Each condition tags a window-level descriptor: root velocities in the
root-aligned frame, planar root motion, limb-normalized local end-effector
positions, absolute world end-effector positions, offset-removed planar root
path, or absolute root height. Velocity-style features average the T-1
finite differences of a T-frame window; positional features average all T
frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import so3_log_vee, wrap_angle, yaw_of
from .motion import MotionWindow
from .skeleton import Skeleton

CONDITION_TAGS = ("root-velocity", "root-2d", "local-ee", "world-xyz-ee",
                  "world-xy-root", "world-z")
NULL_TAG = "null"

LIMB_EPS = 1e-8


class NullConditionError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    tag: str
    ee_subset: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.tag not in CONDITION_TAGS and self.tag != NULL_TAG:
            raise ValueError(f"unknown condition tag {self.tag!r}")
        if self.ee_subset and self.tag not in ("local-ee", "world-xyz-ee"):
            raise ValueError(f"condition {self.tag!r} does not take an end-effector subset")

    @property
    def is_null(self) -> bool:
        return self.tag == NULL_TAG

    def one_hot(self) -> np.ndarray:
        """Tag one-hot; the null condition is the all-zero vector."""
        v = np.zeros(len(CONDITION_TAGS))
        if not self.is_null:
            v[CONDITION_TAGS.index(self.tag)] = 1.0
        return v

    def label(self) -> str:
        if self.ee_subset:
            return f"{self.tag}:{','.join(self.ee_subset)}"
        return self.tag

    @staticmethod
    def parse(text: str) -> "Condition":
        text = text.strip()
        if ":" in text:
            tag, subset = text.split(":", 1)
            ees = tuple(s.strip() for s in subset.split(",") if s.strip())
            return Condition(tag.strip(), ees)
        return Condition(text)


NULL_CONDITION = Condition(NULL_TAG)


def feature_dim(condition: Condition, skeleton: Skeleton) -> int:
    tag = condition.tag
    if tag == "root-velocity":
        return 6
    if tag == "root-2d":
        return 3
    if tag in ("local-ee", "world-xyz-ee"):
        n = len(condition.ee_subset) if condition.ee_subset else len(skeleton.end_effectors)
        return 3 * n
    if tag == "world-xy-root":
        return 2
    if tag == "world-z":
        return 1
    raise NullConditionError("the null condition has no feature extractor")


def _root_vel_series(window: MotionWindow) -> tuple[np.ndarray, np.ndarray]:
    """Per-diff root-aligned linear velocity and angular velocity, (T-1, 3) each."""
    pos = window.positions[:, 0]
    rot = window.rotations[:, 0]
    fps = window.fps
    T = pos.shape[0]
    lin = np.empty((T - 1, 3))
    ang = np.empty((T - 1, 3))
    for u in range(T - 1):
        lin[u] = rot[u].T @ (pos[u + 1] - pos[u]) * fps
        ang[u] = so3_log_vee(rot[u].T @ rot[u + 1]) * fps
    return lin, ang


def phi_root_velocity(window: MotionWindow) -> np.ndarray:
    if window.length < 2:
        raise ValueError("root-velocity feature needs at least 2 frames")
    lin, ang = _root_vel_series(window)
    return np.concatenate([lin.mean(axis=0), ang.mean(axis=0)])


def phi_root_2d(window: MotionWindow) -> np.ndarray:
    if window.length < 2:
        raise ValueError("root-2d feature needs at least 2 frames")
    lin, _ = _root_vel_series(window)
    rot = window.rotations[:, 0]
    yaws = np.array([yaw_of(R) for R in rot])
    rates = np.array([wrap_angle(yaws[u + 1] - yaws[u]) for u in range(len(yaws) - 1)]) * window.fps
    return np.array([lin[:, 0].mean(), lin[:, 1].mean(), rates.mean()])


def phi_local_ee(window: MotionWindow, skeleton: Skeleton, subset=()) -> np.ndarray:
    order = skeleton.ee_order(subset)
    pos = window.positions
    root_rot = window.rotations[:, 0]
    feats = []
    for ee in order:
        j = skeleton.index(ee)
        a = skeleton.index(skeleton.anchors[ee])
        rel = np.einsum("tba,tb->ta", root_rot, pos[:, j] - pos[:, a])  # R^T (p_j - p_a)
        # max() instead of addition keeps the feature exactly scale-invariant
        # while still flooring degenerate limb lengths
        feats.append(rel.mean(axis=0) / max(skeleton.limb_lengths[ee], LIMB_EPS))
    return np.concatenate(feats)


def phi_world_xyz_ee(window: MotionWindow, skeleton: Skeleton, subset=()) -> np.ndarray:
    order = skeleton.ee_order(subset)
    pos = window.positions
    return np.concatenate([pos[:, skeleton.index(ee)].mean(axis=0) for ee in order])


def phi_world_xy_root(window: MotionWindow) -> np.ndarray:
    xy = window.positions[:, 0, :2]
    return (xy - xy[0]).mean(axis=0)


def phi_world_z(window: MotionWindow) -> np.ndarray:
    return np.array([window.positions[:, 0, 2].mean()])


def phi(window: MotionWindow, condition: Condition, skeleton: Skeleton | None = None) -> np.ndarray:
    """Window-level feature for a condition; raises for the null condition."""
    tag = condition.tag
    if tag == NULL_TAG:
        raise NullConditionError("phi is undefined for the null condition")
    if tag == "root-velocity":
        return phi_root_velocity(window)
    if tag == "root-2d":
        return phi_root_2d(window)
    if tag == "local-ee":
        if skeleton is None:
            raise ValueError("local-ee feature needs the skeleton")
        return phi_local_ee(window, skeleton, condition.ee_subset)
    if tag == "world-xyz-ee":
        if skeleton is None:
            raise ValueError("world-xyz-ee feature needs the skeleton")
        return phi_world_xyz_ee(window, skeleton, condition.ee_subset)
    if tag == "world-xy-root":
        return phi_world_xy_root(window)
    if tag == "world-z":
        return phi_world_z(window)
    raise ValueError(f"unknown condition tag {tag!r}")
