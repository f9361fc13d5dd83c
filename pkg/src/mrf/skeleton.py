"""Skeleton description and forward kinematics for the synthetic characters."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int  # -1 for the root


@dataclass
class Skeleton:
    character_id: str
    joints: list[Joint]
    offsets: np.ndarray                  # (J, 3) bone vector from parent, in the parent frame
    end_effectors: tuple[str, ...]
    anchors: dict[str, str]              # end-effector name -> anchor joint name
    floor_height: float = 0.0
    feet: tuple[str, ...] = ()
    limb_lengths: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if self.joints[0].parent != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for i, j in enumerate(self.joints[1:], start=1):
            if not 0 <= j.parent < i:
                raise ValueError(f"joint {j.name!r}: parent index {j.parent} does not precede it")
        if not self.limb_lengths:
            self.limb_lengths = {ee: self._chain_length(ee) for ee in self.end_effectors}
        for ee, length in self.limb_lengths.items():
            if length <= 0:
                raise ValueError(f"limb length for {ee!r} must be > 0, got {length}")

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(f"unknown joint {name!r} on character {self.character_id!r}")

    def _chain_length(self, ee: str) -> float:
        anchor_idx = self.index(self.anchors[ee])
        i = self.index(ee)
        total = 0.0
        while i != anchor_idx:
            total += float(np.linalg.norm(self.offsets[i]))
            i = self.joints[i].parent
            if i < 0:
                raise ValueError(f"anchor {self.anchors[ee]!r} is not an ancestor of {ee!r}")
        return total

    def ee_order(self, subset) -> list[str]:
        """Subset of end-effectors in skeleton declaration order."""
        subset = tuple(subset) if subset else self.end_effectors
        for ee in subset:
            if ee not in self.end_effectors:
                raise KeyError(f"{ee!r} is not an end-effector of {self.character_id!r}")
        return [j.name for j in self.joints if j.name in set(subset)]

    def fk(self, root_positions: np.ndarray, world_rotations: np.ndarray) -> np.ndarray:
        """Joint world positions (T, J, 3) from root path and world rotations."""
        T = root_positions.shape[0]
        J = self.joint_count
        pos = np.zeros((T, J, 3))
        pos[:, 0] = root_positions
        for j in range(1, J):
            parent = self.joints[j].parent
            pos[:, j] = pos[:, parent] + np.einsum("tab,b->ta", world_rotations[:, parent], self.offsets[j])
        return pos

    def rest_root_height(self) -> float:
        """Root height that puts the lowest zero-pose joint on the floor."""
        rot = np.broadcast_to(np.eye(3), (1, self.joint_count, 3, 3)).copy()
        pos = self.fk(np.zeros((1, 3)), rot)
        return float(self.floor_height - pos[0, :, 2].min())

    def scaled(self, factor: float, character_id: str | None = None) -> "Skeleton":
        if factor <= 0:
            raise ValueError(f"scale factor must be > 0, got {factor}")
        return Skeleton(
            character_id=character_id or f"{self.character_id}-x{factor:g}",
            joints=list(self.joints),
            offsets=self.offsets * factor,
            end_effectors=self.end_effectors,
            anchors=dict(self.anchors),
            floor_height=self.floor_height * factor,
            feet=self.feet,
            limb_lengths={k: v * factor for k, v in self.limb_lengths.items()},
        )


def biped_a() -> Skeleton:
    """7-joint biped: root, two hip/knee legs, two arm end-effectors."""
    joints = [
        Joint("root", -1),
        Joint("l_hip", 0),
        Joint("l_knee", 1),
        Joint("r_hip", 0),
        Joint("r_knee", 3),
        Joint("l_arm", 0),
        Joint("r_arm", 0),
    ]
    offsets = np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.12, -0.05],
        [0.0, 0.0, -0.85],
        [0.0, -0.12, -0.05],
        [0.0, 0.0, -0.85],
        [0.0, 0.30, 0.40],
        [0.0, -0.30, 0.40],
    ])
    return Skeleton(
        character_id="biped-A",
        joints=joints,
        offsets=offsets,
        end_effectors=("l_knee", "r_knee", "l_arm", "r_arm"),
        anchors={"l_knee": "l_hip", "r_knee": "r_hip", "l_arm": "root", "r_arm": "root"},
        floor_height=0.0,
        feet=("l_knee", "r_knee"),
    )


def biped_b() -> Skeleton:
    """Half-scale biped-A with 1.2x longer arms (known analytic correspondence)."""
    small = biped_a().scaled(0.5, character_id="biped-B")
    offsets = small.offsets.copy()
    for name in ("l_arm", "r_arm"):
        offsets[small.index(name)] *= 1.2
    return Skeleton(
        character_id="biped-B",
        joints=list(small.joints),
        offsets=offsets,
        end_effectors=small.end_effectors,
        anchors=dict(small.anchors),
        floor_height=small.floor_height,
        feet=small.feet,
    )


_BUILDERS = {"biped-A": biped_a, "biped-B": biped_b}


def get_skeleton(character_id: str) -> Skeleton:
    try:
        return _BUILDERS[character_id]()
    except KeyError:
        raise KeyError(f"unknown character {character_id!r}; known: {sorted(_BUILDERS)}") from None
