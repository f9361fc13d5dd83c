"""Motion clips, windows, channel layout, normalization stats, and file io.

Channel layout per frame (fixed, frame-major in the flat window vector):
joint positions (J*3), joint rotations as row-major 3x3 matrices (J*9),
root velocity (3). C = 12*J + 3 channels per frame.

Clip files are text: "MRFCLIP 1", skeleton id, fps, joint count, frame
count, then one line of space-separated channels per frame. Lines starting
with '#' after the frames carry provenance (config fingerprint, seed) and
are ignored by the reader. Stats files are "MRFSTATS 1" with a mean line
and a std line.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import project_rotations
from .skeleton import Skeleton

CLIP_MAGIC = "MRFCLIP 1"
STATS_MAGIC = "MRFSTATS 1"


def channel_count(joint_count: int) -> int:
    return 12 * joint_count + 3


@dataclass
class MotionFrame:
    positions: np.ndarray  # (J, 3)
    rotations: np.ndarray  # (J, 3, 3); index 0 is the root orientation
    root_velocity: np.ndarray  # (3,)


class MotionClip:
    def __init__(self, skeleton_id: str, fps: float, positions: np.ndarray,
                 rotations: np.ndarray, root_velocity: np.ndarray):
        if fps <= 0:
            raise ValueError(f"fps must be > 0, got {fps}")
        self.skeleton_id = skeleton_id
        self.fps = float(fps)
        self.positions = np.asarray(positions, dtype=np.float64)
        self.rotations = np.asarray(rotations, dtype=np.float64)
        self.root_velocity = np.asarray(root_velocity, dtype=np.float64)
        T, J = self.positions.shape[:2]
        if self.rotations.shape != (T, J, 3, 3) or self.root_velocity.shape != (T, 3):
            raise ValueError("positions, rotations and root velocity disagree on frame/joint counts")

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]

    @property
    def joint_count(self) -> int:
        return self.positions.shape[1]

    def frame(self, t: int) -> MotionFrame:
        return MotionFrame(self.positions[t], self.rotations[t], self.root_velocity[t])

    def channels(self) -> np.ndarray:
        """(T, C) per-frame channel matrix in the documented layout."""
        T, J = self.positions.shape[:2]
        return np.concatenate([
            self.positions.reshape(T, J * 3),
            self.rotations.reshape(T, J * 9),
            self.root_velocity,
        ], axis=1)

    @staticmethod
    def from_channels(skeleton_id: str, fps: float, channels: np.ndarray,
                      joint_count: int, orthonormalize: bool = True) -> "MotionClip":
        channels = np.asarray(channels, dtype=np.float64)
        T = channels.shape[0]
        J = joint_count
        if channels.shape[1] != channel_count(J):
            raise ValueError(f"expected {channel_count(J)} channels for {J} joints, got {channels.shape[1]}")
        pos = channels[:, : J * 3].reshape(T, J, 3)
        rot = channels[:, J * 3: J * 12].reshape(T, J, 3, 3)
        vel = channels[:, J * 12:]
        if orthonormalize:
            rot = project_rotations(rot)
        return MotionClip(skeleton_id, fps, pos, rot, vel)


class MotionWindow:
    """A view of H consecutive frames of a clip."""

    def __init__(self, clip: MotionClip, start: int, length: int):
        if start < 0 or start + length > clip.frame_count:
            raise ValueError(f"window [{start}, {start + length}) outside clip of {clip.frame_count} frames")
        self.clip = clip
        self.start = start
        self.length = length

    @property
    def fps(self) -> float:
        return self.clip.fps

    @property
    def positions(self) -> np.ndarray:
        return self.clip.positions[self.start:self.start + self.length]

    @property
    def rotations(self) -> np.ndarray:
        return self.clip.rotations[self.start:self.start + self.length]

    @property
    def root_velocity(self) -> np.ndarray:
        return self.clip.root_velocity[self.start:self.start + self.length]

    def channels(self) -> np.ndarray:
        return self.clip.channels()[self.start:self.start + self.length]

    def flat(self) -> np.ndarray:
        return self.channels().reshape(-1)

    def normalized(self, stats: "NormStats") -> np.ndarray:
        """Flattened-and-normalized channel vector (frame-major)."""
        return normalize(self.channels(), stats).reshape(-1)


def extract_windows(clip: MotionClip, H: int, stride: int = 1) -> list[MotionWindow]:
    """All windows at offsets 0, stride, ...; empty (with a warning) if the clip is short."""
    if H <= 0 or stride <= 0:
        raise ValueError("window length and stride must be positive")
    T = clip.frame_count
    if T < H:
        warnings.warn(f"clip has {T} frames < window {H}; no windows extracted")
        return []
    return [MotionWindow(clip, s, H) for s in range(0, T - H + 1, stride)]


@dataclass
class NormStats:
    mean: np.ndarray  # (C,)
    std: np.ndarray   # (C,), floored above 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if np.any(self.std <= 0):
            raise ValueError("std must be strictly positive after flooring")


STD_FLOOR = 1e-3


def compute_stats(clips: list[MotionClip], floor: float = STD_FLOOR) -> NormStats:
    """Dataset-level per-channel mean/std over every frame of every clip."""
    all_ch = np.concatenate([c.channels() for c in clips], axis=0)
    mean = all_ch.mean(axis=0)
    std = np.maximum(all_ch.std(axis=0), floor)
    return NormStats(mean, std)


def normalize(x: np.ndarray, stats: NormStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    C = stats.mean.shape[0]
    if x.shape[-1] != C:
        if x.ndim == 1 and x.size % C == 0:
            return ((x.reshape(-1, C) - stats.mean) / stats.std).reshape(-1)
        raise ValueError(f"channel count mismatch: data has {x.shape[-1]}, stats expect {C}")
    return (x - stats.mean) / stats.std


def denormalize(x: np.ndarray, stats: NormStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    C = stats.mean.shape[0]
    if x.shape[-1] != C:
        if x.ndim == 1 and x.size % C == 0:
            return (x.reshape(-1, C) * stats.std + stats.mean).reshape(-1)
        raise ValueError(f"channel count mismatch: data has {x.shape[-1]}, stats expect {C}")
    return x * stats.std + stats.mean


def scale_character(skeleton: Skeleton, clip: MotionClip, factor: float):
    """Uniformly scale a character and its motion; rotations are untouched."""
    if factor <= 0:
        raise ValueError(f"scale factor must be > 0, got {factor}")
    new_skel = skeleton.scaled(factor)
    new_clip = MotionClip(
        skeleton_id=new_skel.character_id,
        fps=clip.fps,
        positions=clip.positions * factor,
        rotations=clip.rotations.copy(),
        root_velocity=clip.root_velocity * factor,
    )
    return new_skel, new_clip


# -- file io -----------------------------------------------------------------

def _fmt_row(row: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in row)


def write_clip(path, clip: MotionClip, fingerprint: str | None = None,
               seed: int | None = None) -> None:
    lines = [CLIP_MAGIC, clip.skeleton_id, repr(clip.fps),
             str(clip.joint_count), str(clip.frame_count)]
    ch = clip.channels()
    lines.extend(_fmt_row(row) for row in ch)
    if fingerprint is not None or seed is not None:
        lines.append(f"# fingerprint={fingerprint or '-'} seed={seed if seed is not None else '-'}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_clip(path) -> MotionClip:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CLIP_MAGIC:
        raise ValueError(f"{path}: not a {CLIP_MAGIC} file")
    skeleton_id = lines[1]
    fps = float(lines[2])
    joint_count = int(lines[3])
    frame_count = int(lines[4])
    rows = []
    for line in lines[5:5 + frame_count]:
        rows.append(np.array([float(v) for v in line.split()]))
    if len(rows) != frame_count:
        raise ValueError(f"{path}: expected {frame_count} frames, found {len(rows)}")
    channels = np.stack(rows)
    # stored rotations are exact; do not re-project on read
    return MotionClip.from_channels(skeleton_id, fps, channels, joint_count, orthonormalize=False)


def write_stats(path, stats: NormStats) -> None:
    lines = [STATS_MAGIC, _fmt_row(stats.mean), _fmt_row(stats.std)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_stats(path) -> NormStats:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != STATS_MAGIC:
        raise ValueError(f"{path}: not a {STATS_MAGIC} file")
    mean = np.array([float(v) for v in lines[1].split()])
    std = np.array([float(v) for v in lines[2].split()])
    return NormStats(mean, std)
