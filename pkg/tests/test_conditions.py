"""Analytic checks of the per-condition feature extractors."""

import numpy as np
import pytest

from mrf.conditions import (CONDITION_TAGS, Condition, NULL_CONDITION,
                            NullConditionError, feature_dim, phi,
                            phi_local_ee, phi_root_2d, phi_root_velocity,
                            phi_world_xy_root, phi_world_xyz_ee, phi_world_z)
from mrf.geometry import rot_z
from mrf.motion import MotionClip, MotionWindow, extract_windows, scale_character
from mrf.skeleton import biped_a
from mrf.synthetic import generate_synthetic

from oracles import rodrigues

FPS = 32.0


def window_of(clip, start=0, length=None):
    return MotionWindow(clip, start, length or clip.frame_count)


def make_clip(positions, rotations=None, skeleton=None):
    """Clip from explicit root data; other joints follow FK."""
    skel = skeleton or biped_a()
    T = positions.shape[0]
    world = np.broadcast_to(np.eye(3), (T, skel.joint_count, 3, 3)).copy()
    if rotations is not None:
        world[:, 0] = rotations
    pos = skel.fk(positions, world)
    vel = np.zeros((T, 3))
    vel[:-1] = (positions[1:] - positions[:-1]) * FPS
    vel[-1] = vel[-2]
    return MotionClip(skel.character_id, FPS, pos, world, vel)


def stationary_clip(T=32, height=0.9):
    pos = np.zeros((T, 3))
    pos[:, 2] = height
    return make_clip(pos)


# -- root velocity -----------------------------------------------------------

def test_root_velocity_stationary_is_zero():
    f = phi_root_velocity(window_of(stationary_clip()))
    assert f.shape == (6,)
    assert np.allclose(f, 0.0)


def test_root_velocity_constant_x():
    T = 32
    pos = np.zeros((T, 3))
    pos[:, 0] = np.arange(T) / FPS  # 1 m/s along +x
    pos[:, 2] = 0.9
    f = phi_root_velocity(window_of(make_clip(pos)))
    assert np.max(np.abs(f - [1, 0, 0, 0, 0, 0])) < 1e-6


def test_root_velocity_pure_spin():
    # 0.5 rad/s about z, no translation: Rodrigues-generated orientation track
    T = 32
    pos = np.zeros((T, 3))
    rots = np.stack([rodrigues([0, 0, 1], 0.5 * t / FPS) for t in range(T)])
    f = phi_root_velocity(window_of(make_clip(pos, rots)))
    assert np.max(np.abs(f - [0, 0, 0, 0, 0, 0.5])) < 1e-6


def test_root_velocity_translation_invariant():
    _, clipA = None, generate_synthetic("walk", biped_a(), {"speed": 1.2, "heading": 0.4}, seed=2)
    shifted = MotionClip(clipA.skeleton_id, clipA.fps,
                         clipA.positions + np.array([5.0, -3.0, 2.0]),
                         clipA.rotations, clipA.root_velocity)
    f1 = phi_root_velocity(window_of(clipA, 0, 32))
    f2 = phi_root_velocity(window_of(shifted, 0, 32))
    assert np.max(np.abs(f1 - f2)) < 1e-9


# -- planar root -----------------------------------------------------------

def test_root_2d_stationary():
    assert np.allclose(phi_root_2d(window_of(stationary_clip())), 0.0)


def test_root_2d_one_mps_y():
    T = 32
    pos = np.zeros((T, 3))
    pos[:, 1] = np.arange(T) / FPS
    f = phi_root_2d(window_of(make_clip(pos)))
    assert np.max(np.abs(f - [0.0, 1.0, 0.0])) < 1e-6


def test_root_2d_yaw_wrap_boundary():
    # constant yaw rate crossing the +-pi boundary must not produce a 2*pi jump
    T = 32
    rate = 1.0  # rad/s
    yaw0 = np.pi - 0.2
    pos = np.zeros((T, 3))
    rots = np.stack([rot_z(yaw0 + rate * t / FPS) for t in range(T)])
    f = phi_root_2d(window_of(make_clip(pos, rots)))
    assert abs(f[2] - rate) < 1e-6
    assert abs(f[2]) < 2 * np.pi * FPS


# -- local end-effector ----------------------------------------------------

def test_local_ee_extended_arm_unit_component():
    # arm end-effector placed exactly one limb length along local +x of the root
    skel = biped_a()
    T = 8
    pos = np.zeros((T, 3))
    pos[:, 2] = 0.9
    clip = make_clip(pos)
    j = skel.index("r_arm")
    ell = skel.limb_lengths["r_arm"]
    positions = clip.positions.copy()
    positions[:, j] = positions[:, 0] + np.array([ell, 0.0, 0.0])
    clip2 = MotionClip(clip.skeleton_id, clip.fps, positions, clip.rotations, clip.root_velocity)
    f = phi_local_ee(window_of(clip2), skel, ("r_arm",))
    assert abs(f[0] - 1.0) < 1e-9  # ell-normalized unit component
    assert np.max(np.abs(f[1:])) < 1e-12


def test_local_ee_scale_invariance():
    skel = biped_a()
    clip = generate_synthetic("wave", skel, {"amplitude": 0.7}, seed=8)
    f0 = phi_local_ee(window_of(clip, 0, 32), skel)
    for factor in (0.5, 2.0):
        skel2, clip2 = scale_character(skel, clip, factor)
        f = phi_local_ee(window_of(clip2, 0, 32), skel2)
        assert np.max(np.abs(f - f0)) < 1e-10


def test_local_ee_mirrored_pose():
    skel = biped_a()
    clip = generate_synthetic("wave", skel, {"amplitude": 0.5, "arm": "both"}, seed=3)
    w = window_of(clip, 0, 32)
    fl = phi_local_ee(w, skel, ("l_arm",))
    fr = phi_local_ee(w, skel, ("r_arm",))
    # wave poses mirror across the xz-plane: y components flip, x/z agree
    assert abs(fl[0] - fr[0]) < 1e-9
    assert abs(fl[1] + fr[1]) < 1e-9
    assert abs(fl[2] - fr[2]) < 1e-9


def test_local_ee_unknown_joint():
    skel = biped_a()
    clip = stationary_clip()
    with pytest.raises(KeyError):
        phi_local_ee(window_of(clip), skel, ("tail",))


def test_local_ee_subset_order_is_skeleton_order():
    skel = biped_a()
    clip = generate_synthetic("wave", skel, {}, seed=1)
    w = window_of(clip, 0, 32)
    f1 = phi_local_ee(w, skel, ("r_arm", "l_arm"))
    f2 = phi_local_ee(w, skel, ("l_arm", "r_arm"))
    assert np.array_equal(f1, f2)


# -- world end-effector ------------------------------------------------------

def test_world_xyz_pinned_ee():
    skel = biped_a()
    clip = stationary_clip()
    j = skel.index("l_arm")
    positions = clip.positions.copy()
    positions[:, j] = [0.3, 0.0, 1.1]
    clip2 = MotionClip(clip.skeleton_id, clip.fps, positions, clip.rotations, clip.root_velocity)
    f = phi_world_xyz_ee(window_of(clip2), skel, ("l_arm",))
    assert np.allclose(f, [0.3, 0.0, 1.1], atol=1e-12, rtol=0.0)


def test_world_xyz_scales_with_character():
    skel = biped_a()
    clip = generate_synthetic("reach", skel, {}, seed=2)
    f0 = phi_world_xyz_ee(window_of(clip, 0, 32), skel)
    skel2, clip2 = scale_character(skel, clip, 0.5)
    f = phi_world_xyz_ee(window_of(clip2, 0, 32), skel2)
    assert np.max(np.abs(f - 0.5 * f0)) < 1e-12


def test_world_xyz_linear_motion_midpoint():
    # window average of a linearly moving point = midpoint of start and end
    skel = biped_a()
    T = 32
    pos = np.zeros((T, 3))
    pos[:, 2] = 0.9
    clip = make_clip(pos)
    j = skel.index("r_arm")
    positions = clip.positions.copy()
    a, b = np.array([0.1, 0.2, 1.0]), np.array([0.5, -0.2, 1.4])
    for t in range(T):
        positions[t, j] = a + (b - a) * t / (T - 1)
    clip2 = MotionClip(clip.skeleton_id, clip.fps, positions, clip.rotations, clip.root_velocity)
    f = phi_world_xyz_ee(window_of(clip2), skel, ("r_arm",))
    assert np.max(np.abs(f - (a + b) / 2)) < 1e-9


# -- world planar root path ---------------------------------------------------

def test_world_xy_stationary():
    assert np.array_equal(phi_world_xy_root(window_of(stationary_clip())), [0.0, 0.0])


def test_world_xy_straight_walk_half_total():
    T = 32
    pos = np.zeros((T, 3))
    step = np.array([0.03, 0.01])
    pos[:, :2] = np.arange(T)[:, None] * step
    f = phi_world_xy_root(window_of(make_clip(pos)))
    total = (T - 1) * step
    assert np.max(np.abs(f - total / 2)) < 1e-9


def test_world_xy_offset_independent_for_uniform_motion():
    T = 96
    pos = np.zeros((T, 3))
    pos[:, 0] = 0.05 * np.arange(T)
    clip = make_clip(pos)
    f1 = phi_world_xy_root(window_of(clip, 0, 32))
    f2 = phi_world_xy_root(window_of(clip, 40, 32))
    assert np.max(np.abs(f1 - f2)) < 1e-9


# -- world height -----------------------------------------------------------

def test_world_z_constant_height():
    f = phi_world_z(window_of(stationary_clip(height=0.9)))
    assert f.shape == (1,)
    assert abs(f[0] - 0.9) < 1e-12


def test_world_z_parabola_below_apex():
    # sampled-parabola oracle: time average of 4h*t*(1-t) is 2h/3 < h
    T = 33
    tau = np.linspace(0, 1, T)
    h = 0.4
    pos = np.zeros((T, 3))
    pos[:, 2] = 0.9 + 4 * h * tau * (1 - tau)
    f = phi_world_z(window_of(make_clip(pos)))
    oracle = np.mean(0.9 + 4 * h * tau * (1 - tau))
    assert abs(f[0] - oracle) < 1e-12
    assert f[0] < 0.9 + h


def test_world_z_scales():
    skel = biped_a()
    clip = generate_synthetic("jump", skel, {"height": 0.3}, seed=5)
    f0 = phi_world_z(window_of(clip, 0, 32))
    _, clip2 = scale_character(skel, clip, 0.5)
    f = phi_world_z(window_of(clip2, 0, 32))
    assert abs(f[0] - 0.5 * f0[0]) < 1e-12


# -- dispatcher and vocabulary -------------------------------------------------

def test_dimensionality_contract():
    skel = biped_a()
    clip = generate_synthetic("walk", skel, {}, seed=1)
    w = window_of(clip, 0, 32)
    expected = {"root-velocity": 6, "root-2d": 3, "local-ee": 12,
                "world-xyz-ee": 12, "world-xy-root": 2, "world-z": 1}
    for tag, dim in expected.items():
        cond = Condition(tag)
        assert feature_dim(cond, skel) == dim
        assert phi(w, cond, skel).shape == (dim,)
    two = Condition("local-ee", ("l_arm", "r_arm"))
    assert feature_dim(two, skel) == 6
    assert phi(w, two, skel).shape == (6,)


def test_null_condition_rejected():
    clip = stationary_clip()
    with pytest.raises(NullConditionError):
        phi(window_of(clip), NULL_CONDITION)
    with pytest.raises(NullConditionError):
        feature_dim(NULL_CONDITION, biped_a())


def test_one_hot_encoding():
    for i, tag in enumerate(CONDITION_TAGS):
        v = Condition(tag).one_hot()
        assert v.sum() == 1.0 and v[i] == 1.0
    assert np.array_equal(NULL_CONDITION.one_hot(), np.zeros(len(CONDITION_TAGS)))


def test_parse_labels():
    c = Condition.parse("local-ee:l_arm,r_arm")
    assert c.tag == "local-ee" and c.ee_subset == ("l_arm", "r_arm")
    assert c.label() == "local-ee:l_arm,r_arm"
    assert Condition.parse("world-z") == Condition("world-z")
    with pytest.raises(ValueError):
        Condition.parse("bogus-tag")
    with pytest.raises(ValueError):
        Condition.parse("world-z:l_arm")
