"""Tests for anchor geometry and TDOA least-squares reconstruction."""

import json

import numpy as np
import pytest

from helpers import random_rotation
from uwbnav.liegroup import Rotation
from uwbnav.tdoa import (
    Anchor,
    AnchorSet,
    GeometryDegenerate,
    TdoaFrame,
    build_system,
    load_anchors,
    solve_frame,
    solve_position,
    synthesize_tdoa,
)


def box_anchors(side=4.0, height=4.0, origin=(0.0, 0.0, 0.0)):
    """Eight anchors on the vertices of a rectangular box."""
    o = np.asarray(origin, dtype=float)
    verts = [
        o + np.array([x, y, z])
        for x in (0.0, side)
        for y in (0.0, side)
        for z in (0.0, height)
    ]
    return AnchorSet(tuple(Anchor(id=i + 1, pos=v) for i, v in enumerate(verts)))


def tetra_anchors():
    pts = [(0.0, 0.0, 0.0), (4.0, 0.0, 0.0), (0.0, 4.0, 0.0), (0.0, 0.0, 4.0)]
    return AnchorSet(tuple(Anchor(id=i, pos=np.array(p)) for i, p in enumerate(pts)))


# --- anchor-set validation -----------------------------------------------------


def test_anchorset_requires_four_anchors():
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]
    with pytest.raises(ValueError, match="4 anchors"):
        AnchorSet(tuple(Anchor(id=i, pos=np.array(p, dtype=float)) for i, p in enumerate(pts)))


def test_anchorset_rejects_duplicate_ids():
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    with pytest.raises(ValueError, match="unique"):
        AnchorSet(tuple(Anchor(id=1, pos=np.array(p, dtype=float)) for p in pts))


def test_anchorset_rejects_coplanar_anchors():
    pts = [(0, 0, 0), (4, 0, 0), (0, 4, 0), (4, 4, 0), (2, 2, 0)]
    with pytest.raises(ValueError, match="coplanar"):
        AnchorSet(tuple(Anchor(id=i, pos=np.array(p, dtype=float)) for i, p in enumerate(pts)))


def test_anchorset_diameter():
    a = box_anchors(side=4.0, height=4.0)
    assert a.diameter == pytest.approx(np.sqrt(48.0))


def test_anchor_rejects_non_finite_position():
    with pytest.raises(ValueError):
        Anchor(id=1, pos=np.array([np.inf, 0.0, 0.0]))


def test_frame_rejects_non_finite_differences():
    with pytest.raises(ValueError):
        TdoaFrame(timestamp=0.0, d=[0.0, np.nan, 0.0, 0.0])


# --- build_system ----------------------------------------------------------------


def test_build_system_zero_differences_reduction():
    anchors = tetra_anchors()
    frame = TdoaFrame(timestamp=0.0, d=np.zeros(4))
    A, B = build_system(anchors, frame)
    assert A.shape == (4, 4)
    assert np.array_equal(A[:, 3], np.zeros(4))
    h = anchors.positions
    for k in range(4):
        j = (k + 1) % 4
        np.testing.assert_allclose(A[k, :3], h[k] - h[j], atol=1e-15)
        assert B[k] == pytest.approx(0.5 * (h[k] @ h[k] - h[j] @ h[j]))


def test_build_system_row_count_matches_anchors():
    anchors = box_anchors()
    frame = synthesize_tdoa([1.0, 2.0, 1.0], None, anchors)
    A, B = build_system(anchors, frame)
    assert A.shape == (8, 4)
    assert B.shape == (8,)


def test_build_system_algebraic_identity():
    # A [P, ||P - h1||] = B must hold exactly for noiseless synthesis.
    anchors = box_anchors()
    rng = np.random.default_rng(31)
    for _ in range(50):
        P = rng.uniform(0.5, 3.5, size=3)
        frame = synthesize_tdoa(P, None, anchors)
        A, B = build_system(anchors, frame)
        pbar = np.append(P, np.linalg.norm(P - anchors.positions[0]))
        assert np.max(np.abs(A @ pbar - B)) < 1e-9


def test_build_system_rejects_length_mismatch():
    anchors = box_anchors()
    frame = TdoaFrame(timestamp=0.0, d=np.zeros(4))
    with pytest.raises(ValueError, match="8 anchors"):
        build_system(anchors, frame)


def test_build_system_rejects_out_of_range_difference():
    # |d_k| can never exceed the anchor-set diameter (plus slack).
    anchors = box_anchors()
    d = np.zeros(8)
    d[2] = anchors.diameter + 2.0
    with pytest.raises(ValueError, match="difference"):
        build_system(anchors, TdoaFrame(timestamp=0.0, d=d))


# --- solve_position ---------------------------------------------------------------


def test_solve_recovers_position_in_cube():
    anchors = box_anchors(side=4.0, height=4.0)
    P = np.array([1.0, 2.0, 0.5])
    frame = synthesize_tdoa(P, None, anchors)
    fix = solve_frame(anchors, frame)
    assert np.linalg.norm(fix.p - P) <= 1e-8
    assert fix.range_to_h1 == pytest.approx(np.linalg.norm(P - anchors.positions[0]), abs=1e-8)
    assert fix.range_consistency <= 1e-6
    assert not fix.negative_range
    assert not fix.reduced


def test_solve_zero_differences_is_degenerate():
    anchors = box_anchors()
    A, B = build_system(anchors, TdoaFrame(timestamp=0.0, d=np.zeros(8)))
    with pytest.raises(GeometryDegenerate) as exc_info:
        solve_position(A, B)
    assert exc_info.value.rank == 3


def test_solve_perturbed_differences_stay_centimeter_scale():
    anchors = box_anchors()
    P = np.array([1.4, 2.2, 1.1])
    rng = np.random.default_rng(32)
    frame = synthesize_tdoa(P, None, anchors)
    d = frame.d + rng.uniform(-1e-3, 1e-3, size=8)
    fix = solve_frame(anchors, TdoaFrame(timestamp=0.0, d=d))
    assert np.linalg.norm(fix.p - P) < 0.05
    assert fix.residual > 0.0


def test_reduced_fallback_solves_equidistant_case():
    anchors = box_anchors()
    A, B = build_system(anchors, TdoaFrame(timestamp=0.0, d=np.zeros(8)))
    fix = solve_position(A, B, allow_reduced=True)
    assert fix.reduced
    assert np.isnan(fix.range_to_h1)
    # All-zero differences mean equidistance: the box center.
    np.testing.assert_allclose(fix.p, [2.0, 2.0, 2.0], atol=1e-9)


# --- synthesize_tdoa ---------------------------------------------------------------


def test_synthesize_equidistant_point_gives_zero_differences():
    anchors = box_anchors()
    center = np.array([2.0, 2.0, 2.0])
    frame = synthesize_tdoa(center, None, anchors)
    np.testing.assert_allclose(frame.d, np.zeros(8), atol=1e-12)


def test_synthesize_tag_offset_shifts_effective_position():
    anchors = box_anchors()
    P = np.array([1.3, 2.4, 1.9])
    v_c = np.array([-0.012, 0.001, 0.091])
    rng = np.random.default_rng(33)
    R = Rotation(random_rotation(rng))
    with_offset = synthesize_tdoa(P, R, anchors, tag_offset=v_c)
    at_shifted = synthesize_tdoa(P + R.m @ v_c, None, anchors)
    np.testing.assert_allclose(with_offset.d, at_shifted.d, atol=1e-12)
    plain = synthesize_tdoa(P, R, anchors)
    assert np.max(np.abs(with_offset.d - plain.d)) > 1e-4


def test_synthesis_solve_round_trip_with_offset():
    anchors = box_anchors()
    rng = np.random.default_rng(34)
    for _ in range(50):
        P = rng.uniform(0.5, 3.5, size=3)
        R = Rotation(random_rotation(rng))
        v_c = rng.uniform(-0.1, 0.1, size=3)
        frame = synthesize_tdoa(P, R, anchors, tag_offset=v_c)
        fix = solve_frame(anchors, frame)
        assert np.linalg.norm(fix.p - (P + R.m @ v_c)) <= 1e-8


def test_cyclic_differences_telescope_to_zero():
    anchors = box_anchors()
    rng = np.random.default_rng(35)
    for _ in range(50):
        P = rng.uniform(0.0, 4.0, size=3)
        frame = synthesize_tdoa(P, None, anchors)
        assert abs(np.sum(frame.d)) < 1e-12


def test_synthesize_noise_is_seed_deterministic():
    anchors = box_anchors()
    P = np.array([1.0, 1.0, 1.0])
    a = synthesize_tdoa(P, None, anchors, noise_sd=0.05, seed=(7, 1, 3))
    b = synthesize_tdoa(P, None, anchors, noise_sd=0.05, seed=(7, 1, 3))
    c = synthesize_tdoa(P, None, anchors, noise_sd=0.05, seed=(7, 1, 4))
    assert np.array_equal(a.d, b.d)
    assert not np.array_equal(a.d, c.d)


# --- anchors JSON ---------------------------------------------------------------


def test_load_anchors_round_trip(tmp_path):
    path = tmp_path / "anchors.json"
    doc = {
        "anchors": [
            {"id": 1, "pos": [0.0, 0.0, 0.0]},
            {"id": 2, "pos": [4.0, 0.0, 0.0]},
            {"id": 3, "pos": [0.0, 4.0, 0.0]},
            {"id": 4, "pos": [0.0, 0.0, 4.0]},
            {"id": 5, "pos": [4.0, 4.0, 4.0]},
        ]
    }
    path.write_text(json.dumps(doc))
    anchors = load_anchors(path)
    assert anchors.n == 5
    assert [a.id for a in anchors.anchors] == [1, 2, 3, 4, 5]
    np.testing.assert_allclose(anchors.positions[4], [4.0, 4.0, 4.0])


def test_load_anchors_rejects_malformed_document(tmp_path):
    path = tmp_path / "anchors.json"
    path.write_text(json.dumps({"sites": []}))
    with pytest.raises(ValueError, match="malformed"):
        load_anchors(path)
