"""Procedural motion generation for the synthetic characters.

Every generator produces a root path plus per-joint local rotations and
assembles them through forward kinematics, so generated clips satisfy the
FK-consistency and root-velocity invariants by construction.
"""

from __future__ import annotations

import numpy as np

from .motion import MotionClip
from .skeleton import Skeleton

FPS = 32.0

KINDS = ("walk", "wave", "jump", "reach")

# inclusive parameter ranges checked by generate_synthetic
PARAM_RANGES = {
    "speed": (0.0, 2.0),         # m/s
    "amplitude": (0.0, 1.0),     # rad
    "heading": (-np.pi, np.pi),  # rad
    "frequency": (0.25, 3.0),    # Hz
    "height": (0.0, 0.6),        # m (jump apex above rest)
    "frames": (2, 100000),
}


def _check(params: dict, key: str, default):
    v = params.get(key, default)
    lo, hi = PARAM_RANGES[key]
    if not (lo <= v <= hi):
        raise ValueError(f"parameter {key}={v} outside allowed range [{lo}, {hi}]")
    return v


def _rx(a: np.ndarray) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    c, s = np.cos(a), np.sin(a)
    R = np.zeros((a.shape[0], 3, 3))
    R[:, 0, 0] = 1.0
    R[:, 1, 1] = c
    R[:, 1, 2] = -s
    R[:, 2, 1] = s
    R[:, 2, 2] = c
    return R


def _ry(a: np.ndarray) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    c, s = np.cos(a), np.sin(a)
    R = np.zeros((a.shape[0], 3, 3))
    R[:, 0, 0] = c
    R[:, 0, 2] = s
    R[:, 1, 1] = 1.0
    R[:, 2, 0] = -s
    R[:, 2, 2] = c
    return R


def _rz(a: np.ndarray) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    c, s = np.cos(a), np.sin(a)
    R = np.zeros((a.shape[0], 3, 3))
    R[:, 0, 0] = c
    R[:, 0, 1] = -s
    R[:, 1, 0] = s
    R[:, 1, 1] = c
    R[:, 2, 2] = 1.0
    return R


def _assemble(skeleton: Skeleton, fps: float, root_pos: np.ndarray,
              local_rot: np.ndarray) -> MotionClip:
    """FK over local rotations; root velocity from finite differences."""
    T, J = local_rot.shape[:2]
    world = np.empty_like(local_rot)
    world[:, 0] = local_rot[:, 0]
    for j in range(1, J):
        parent = skeleton.joints[j].parent
        world[:, j] = np.matmul(world[:, parent], local_rot[:, j])
    pos = skeleton.fk(root_pos, world)
    vel = np.empty((T, 3))
    vel[:-1] = (root_pos[1:] - root_pos[:-1]) * fps
    vel[-1] = vel[-2]
    return MotionClip(skeleton.character_id, fps, pos, world, vel)


def _identity_rotations(T: int, J: int) -> np.ndarray:
    return np.broadcast_to(np.eye(3), (T, J, 3, 3)).copy()


def _walk(skeleton: Skeleton, params: dict, rng: np.random.Generator) -> MotionClip:
    T = int(_check(params, "frames", 128))
    speed = _check(params, "speed", 1.0)
    heading = _check(params, "heading", 0.0)
    amp = _check(params, "amplitude", 0.5)
    freq = _check(params, "frequency", 1.5)
    t = np.arange(T) / FPS

    rest = skeleton.rest_root_height()
    root_pos = np.zeros((T, 3))
    root_pos[:, 0] = speed * t * np.cos(heading)
    root_pos[:, 1] = speed * t * np.sin(heading)
    root_pos[:, 2] = rest

    phase = rng.uniform(0.0, 2.0 * np.pi)
    swing = amp * np.sin(2.0 * np.pi * freq * t + phase)
    flex = 0.4 * amp * np.maximum(0.0, np.sin(2.0 * np.pi * freq * t + phase))

    rot = _identity_rotations(T, skeleton.joint_count)
    rot[:, 0] = _rz(np.full(T, heading))
    rot[:, skeleton.index("l_hip")] = _ry(swing)
    rot[:, skeleton.index("r_hip")] = _ry(-swing)
    rot[:, skeleton.index("l_knee")] = _ry(flex)
    rot[:, skeleton.index("r_knee")] = _ry(0.4 * amp * np.maximum(0.0, -np.sin(2.0 * np.pi * freq * t + phase)))
    rot[:, skeleton.index("l_arm")] = _ry(-0.3 * swing)
    rot[:, skeleton.index("r_arm")] = _ry(0.3 * swing)
    return _assemble(skeleton, FPS, root_pos, rot)


def _wave(skeleton: Skeleton, params: dict, rng: np.random.Generator) -> MotionClip:
    T = int(_check(params, "frames", 128))
    amp = _check(params, "amplitude", 0.6)
    freq = _check(params, "frequency", 1.0)
    arm = params.get("arm", "r_arm")
    if arm not in ("l_arm", "r_arm", "both"):
        raise ValueError(f"wave arm must be l_arm, r_arm or both, got {arm!r}")
    t = np.arange(T) / FPS
    root_pos = np.zeros((T, 3))
    root_pos[:, 2] = skeleton.rest_root_height()

    phase = rng.uniform(0.0, 2.0 * np.pi)
    osc = amp * np.sin(2.0 * np.pi * freq * t + phase)
    rot = _identity_rotations(T, skeleton.joint_count)
    names = ("l_arm", "r_arm") if arm == "both" else (arm,)
    for name in names:
        side = 1.0 if name == "l_arm" else -1.0
        # raise the arm overhead, then oscillate around the lifted pose
        rot[:, skeleton.index(name)] = np.matmul(_rx(np.full(T, -1.1 * side)), _ry(osc))
    return _assemble(skeleton, FPS, root_pos, rot)


def _jump(skeleton: Skeleton, params: dict, rng: np.random.Generator) -> MotionClip:
    T = int(_check(params, "frames", 128))
    height = _check(params, "height", 0.3)
    freq = _check(params, "frequency", 1.0)
    t = np.arange(T) / FPS
    period = 1.0 / freq
    tau = (t % period) / period
    duty = 0.6  # airborne fraction of each hop
    air = tau < duty
    z_arc = np.where(air, 4.0 * height * (tau / duty) * (1.0 - tau / duty), 0.0)

    root_pos = np.zeros((T, 3))
    root_pos[:, 2] = skeleton.rest_root_height() + z_arc

    crouch = np.where(air, 0.0, 0.35 * np.sin(np.pi * np.clip((tau - duty) / (1.0 - duty), 0.0, 1.0)))
    arm_swing = z_arc / max(height, 1e-9) if height > 0 else np.zeros(T)
    rot = _identity_rotations(T, skeleton.joint_count)
    rot[:, skeleton.index("l_hip")] = _ry(crouch)
    rot[:, skeleton.index("r_hip")] = _ry(crouch)
    rot[:, skeleton.index("l_arm")] = np.matmul(_ry(-0.4 * arm_swing), _rx(np.full(T, 0.1)))
    rot[:, skeleton.index("r_arm")] = np.matmul(_ry(-0.4 * arm_swing), _rx(np.full(T, -0.1)))
    return _assemble(skeleton, FPS, root_pos, rot)


def _reach(skeleton: Skeleton, params: dict, rng: np.random.Generator) -> MotionClip:
    T = int(_check(params, "frames", 128))
    amp = _check(params, "amplitude", 0.8)
    arm = params.get("arm", "r_arm")
    if arm not in ("l_arm", "r_arm", "both"):
        raise ValueError(f"reach arm must be l_arm, r_arm or both, got {arm!r}")
    s = np.linspace(0.0, 1.0, T)
    ease = s * s * (3.0 - 2.0 * s)  # smoothstep
    rest = skeleton.rest_root_height()
    root_pos = np.zeros((T, 3))
    # rise on the toes while reaching, for height variety
    root_pos[:, 2] = rest + 0.12 * amp * ease * rest

    rot = _identity_rotations(T, skeleton.joint_count)
    names = ("l_arm", "r_arm") if arm == "both" else (arm,)
    for name in names:
        side = 1.0 if name == "l_arm" else -1.0
        rot[:, skeleton.index(name)] = np.matmul(_rx(-1.4 * side * ease), _ry(-0.3 * amp * ease))
    return _assemble(skeleton, FPS, root_pos, rot)


_GENERATORS = {"walk": _walk, "wave": _wave, "jump": _jump, "reach": _reach}


def generate_synthetic(kind: str, skeleton: Skeleton, params: dict | None = None,
                       seed: int = 0) -> MotionClip:
    """Deterministic synthetic clip of the given kind at 32 fps."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown motion kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng(seed)
    return _GENERATORS[kind](skeleton, dict(params or {}), rng)


def sample_params(kind: str, rng: np.random.Generator, frames: int = 128) -> dict:
    """Random per-clip parameters inside the documented ranges."""
    if kind == "walk":
        return {
            "frames": frames,
            "speed": float(rng.uniform(0.0, 1.8)),
            "heading": float(rng.uniform(-np.pi, np.pi)),
            "amplitude": float(rng.uniform(0.2, 0.8)),
            "frequency": float(rng.uniform(0.8, 2.2)),
        }
    if kind == "wave":
        return {
            "frames": frames,
            "amplitude": float(rng.uniform(0.2, 0.9)),
            "frequency": float(rng.uniform(0.5, 2.0)),
            "arm": ("l_arm", "r_arm", "both")[int(rng.integers(3))],
        }
    if kind == "jump":
        return {
            "frames": frames,
            "height": float(rng.uniform(0.05, 0.55)),
            "frequency": float(rng.uniform(0.5, 1.5)),
        }
    if kind == "reach":
        return {
            "frames": frames,
            "amplitude": float(rng.uniform(0.3, 1.0)),
            "arm": ("l_arm", "r_arm", "both")[int(rng.integers(3))],
        }
    raise ValueError(f"unknown motion kind {kind!r}")
