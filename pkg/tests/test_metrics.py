"""Volumetric IoU, Chamfer distance, F-score, and the evaluation drivers."""

import json

import numpy as np
import pytest

from conftest import sphere_form
from ias import shapes
from ias.mesh import build_sample_set, normalize
from ias.metrics import (
    MetricReport,
    chamfer_distance,
    chamfer_distance_bruteforce,
    evaluate_samples,
    evaluate_scene,
    fscore,
    iou,
    mesh_inside,
    scene_inside,
)
from ias.scene import Scene


def inside_sphere(p):
    return np.linalg.norm(p, axis=1) <= 0.5


def inside_cube(p):
    return np.all(np.abs(p) <= 0.5, axis=1)


def test_iou_self_is_exactly_one():
    assert iou(inside_cube, inside_cube, n=20_000, seed=0) == 1.0


def test_iou_disjoint_is_zero():
    def left(p):
        return p[:, 0] < -2.0  # nothing in the domain

    assert iou(left, inside_cube, n=5_000, seed=0) == 0.0
    assert iou(left, left, n=5_000, seed=0) == 0.0  # empty union convention


def test_iou_sphere_inside_cube():
    # ball of radius 1/2 inscribed in the unit cube: pi/6 = 0.5236...
    v = iou(inside_sphere, inside_cube, n=100_000, seed=0)
    assert v == pytest.approx(np.pi / 6.0, abs=0.01)
    # the estimate is deterministic for a fixed seed
    assert iou(inside_sphere, inside_cube, n=100_000, seed=0) == v


def test_iou_uses_shared_sample_stream():
    # evaluating (A, B) and (B, A) must see the same points
    a = iou(inside_sphere, inside_cube, n=50_000, seed=3)
    b = iou(inside_cube, inside_sphere, n=50_000, seed=3)
    assert a == b


def test_chamfer_identity_and_known_pair():
    rng = np.random.default_rng(71)
    pts = rng.uniform(-1.0, 1.0, (500, 3))
    assert chamfer_distance(pts, pts) == 0.0
    a = np.zeros((1, 3))
    b = np.array([[1.0, 0.0, 0.0]])
    assert chamfer_distance(a, b) == 1.0


def test_chamfer_matches_bruteforce():
    ra = np.random.default_rng(5).uniform(-1.0, 1.0, (1000, 3))
    rb = np.random.default_rng(6).uniform(-1.0, 1.0, (1000, 3))
    fast = chamfer_distance(ra, rb)
    brute = chamfer_distance_bruteforce(ra, rb)
    assert abs(fast - brute) <= 1e-12


def test_chamfer_rejects_empty_sets():
    with pytest.raises(ValueError):
        chamfer_distance(np.zeros((0, 3)), np.zeros((5, 3)))


def test_fscore_identity_and_outlier():
    rng = np.random.default_rng(72)
    pts = rng.uniform(-1.0, 1.0, (400, 3))
    assert fscore(pts, pts, tau=0.02) == 100.0
    gt = np.zeros((1, 3))
    pred = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    # one of two predictions lands: precision 50, recall 100, harmonic 66.67
    assert fscore(pred, gt, tau=0.02) == pytest.approx(200.0 / 3.0)


def test_fscore_monotone_in_tau():
    rng = np.random.default_rng(73)
    gt = rng.uniform(-1.0, 1.0, (300, 3))
    pred = gt + rng.normal(0.0, 0.01, gt.shape)
    f_tight = fscore(pred, gt, tau=0.005)
    f_loose = fscore(pred, gt, tau=0.05)
    assert f_tight <= f_loose
    assert f_loose == 100.0


def test_fscore_zero_when_far_apart():
    gt = np.zeros((10, 3))
    pred = np.full((10, 3), 10.0)
    assert fscore(pred, gt, tau=0.02) == 0.0


def test_fscore_requires_positive_tau():
    with pytest.raises(ValueError):
        fscore(np.zeros((3, 3)), np.zeros((3, 3)), tau=0.0)


def test_metric_report_serialization():
    rep = MetricReport(iou=0.91, chamfer=0.012, fscore=88.5, tau=0.02,
                       n_points=1000, seed=0, n_surface_points=500)
    doc = json.loads(rep.to_json())
    assert doc["iou"] == 0.91
    assert doc["fscore"] == 88.5
    table = rep.format_table()
    assert "volumetric IoU" in table
    assert "chamfer distance" in table
    assert "F-score" in table


def test_scene_and_mesh_inside_callables(unit_sphere_scene):
    pts = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
    inside = scene_inside(unit_sphere_scene)(pts)
    assert inside.tolist() == [True, False]
    cube = shapes.box((0.5, 0.5, 0.5))
    got = mesh_inside(cube)(pts)
    assert got.tolist() == [True, False]


def test_evaluate_samples_against_matching_scene():
    m, _ = normalize(shapes.icosphere(subdivisions=2, radius=0.8))
    ss = build_sample_set(m, n_volume=4000, n_surface=800, seed=1)
    scene = Scene.from_matrices([sphere_form(radius=1.0)])
    v = evaluate_samples(scene, ss)
    assert 0.9 <= v <= 1.0


def test_evaluate_scene_full_report(sphere_fit):
    rep = evaluate_scene(sphere_fit.scene, sphere_fit.mesh,
                         n_points=20_000, tau=0.02, resolution=64, seed=0)
    assert rep.iou >= 0.9
    assert rep.chamfer < 0.05
    assert rep.fscore > 30.0
    assert rep.n_points == 20_000
    assert rep.tau == 0.02
    assert rep.n_surface_points == 20_000
