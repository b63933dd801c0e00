import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mmfatlas.errors import InvalidInputError
from mmfatlas.frames import (ALIGNED, INT, REJECTED, STR, UNALIGNED, WB, WF, WINT, AlignmentConfig,
                             FrameField, GradientAccumulator, accumulate, align_frames,
                             aligned_fraction, finalize_direction, init_frames, validity_check)
from mmfatlas.mesh import build_plane_mesh, evaluate

vec3 = arrays(np.float64, 3, elements=st.floats(-1, 1))


@settings(max_examples=60, deadline=None)
@given(vec3, vec3)
def test_from_e1_is_right_handed_orthonormal(e, n):
    if np.linalg.norm(n) < 1e-2:
        n = np.array([0, 0, 1.0])
    n = n / np.linalg.norm(n)
    t = e - (e @ n) * n
    if np.linalg.norm(t) < 1e-3:
        return
    fr = FrameField.from_e1(e[None, None], n[None, None])
    assert fr.orthonormality_error() < 1e-12
    np.testing.assert_allclose(np.cross(fr.e1, fr.e2), fr.e3, atol=1e-12)


@pytest.mark.parametrize("policy", ["fixed-axis", "normal-complement", "stereographic"])
def test_init_frames_orthonormal_on_sphere(sphere, policy):
    fr = init_frames(sphere, policy)
    assert fr.orthonormality_error() < 1e-10
    assert np.all(fr.flag == UNALIGNED)
    np.testing.assert_allclose(fr.e3, sphere.normals)


def test_fixed_axis_on_plane(plane_quad):
    fr = init_frames(plane_quad)
    np.testing.assert_allclose(fr.e1, np.broadcast_to([1, 0, 0], fr.e1.shape))
    np.testing.assert_allclose(fr.e2, np.broadcast_to([0, 1, 0], fr.e2.shape))


def test_stereographic_equals_axis_at_pole(sphere):
    fr = init_frames(sphere, "stereographic", axis=(1, 0, 0), pole=(0, 0, 1))
    top = sphere.nodes[..., 2] > 1 - 1e-12
    assert top.any()
    np.testing.assert_allclose(fr.e1[top], np.broadcast_to([1, 0, 0], fr.e1[top].shape), atol=1e-12)


def test_unknown_policy(plane_quad):
    with pytest.raises(InvalidInputError):
        init_frames(plane_quad, "bogus")


def test_rotated_and_flipped(plane_quad):
    fr = init_frames(plane_quad)
    r = fr.rotated(np.pi / 2)
    np.testing.assert_allclose(r.e1, fr.e2, atol=1e-15)
    f = fr.flipped()
    np.testing.assert_allclose(np.cross(f.e1, f.e2), f.e3)


def _steps(acc, grads, dudts):
    for g, d in zip(grads, dudts):
        accumulate(acc, None, np.full(acc.shape, d), np.broadcast_to(g, acc.shape + (3,)))
    return acc


def test_str_keeps_largest_gradient():
    acc = _steps(GradientAccumulator((1, 1), WF, STR, eps_rel=0.0),
                 [[1, 0, 0], [0, 3, 0], [0, 0, 2]], [1, 1, 1])
    d, ok = finalize_direction(acc)
    np.testing.assert_allclose(d[0, 0], [0, 1, 0])
    assert ok.all()


def test_int_and_wint_differ_in_weighting():
    grads = [[1, 0, 0], [0, 3, 0]]
    d_int, _ = finalize_direction(_steps(GradientAccumulator((1, 1), WF, INT, eps_rel=0.0), grads, [1, 1]))
    d_w, _ = finalize_direction(_steps(GradientAccumulator((1, 1), WF, WINT, eps_rel=0.0), grads, [1, 1]))
    np.testing.assert_allclose(d_int[0, 0], np.array([1, 1, 0]) / np.sqrt(2))
    np.testing.assert_allclose(d_w[0, 0], np.array([1, 3, 0]) / np.sqrt(10))


def test_mode_selects_sign_of_du_dt():
    grads = [[1, 0, 0], [0, 1, 0]]
    wf = _steps(GradientAccumulator((1, 1), WF, WINT, eps_rel=0.0), grads, [1, -1])
    wb = _steps(GradientAccumulator((1, 1), WB, WINT, eps_rel=0.0), grads, [1, -1])
    np.testing.assert_allclose(finalize_direction(wf)[0][0, 0], [1, 0, 0])
    # waveback accumulates -grad u
    np.testing.assert_allclose(finalize_direction(wb)[0][0, 0], [0, -1, 0])
    wbp = _steps(GradientAccumulator((1, 1), WB, WINT, eps_rel=0.0, orientation="propagation"),
                 grads, [1, -1])
    np.testing.assert_allclose(finalize_direction(wbp)[0][0, 0], [0, 1, 0])


def test_negligible_gradients_ignored():
    acc = _steps(GradientAccumulator((1, 1), WF, INT, eps_rel=0.5), [[0, 10, 0], [1, 0, 0]], [1, 1])
    np.testing.assert_allclose(finalize_direction(acc)[0][0, 0], [0, 1, 0])


def test_time_window():
    acc = GradientAccumulator((1, 1), WF, WINT, eps_rel=0.0, t_start=1.0, t_end=2.0)
    for t in (0.5, 1.5, 2.5):
        acc(t, None, np.ones((1, 1)), np.array([[[t, 0, 0]]]))
    assert acc.steps == 1 and acc.weight[0, 0] == pytest.approx(1.5)


def test_empty_accumulator_has_no_direction():
    d, ok = finalize_direction(GradientAccumulator((2, 3)))
    assert not ok.any() and np.all(d == 0)


def test_accumulator_validation():
    with pytest.raises(InvalidInputError):
        GradientAccumulator((1, 1), "XX")
    with pytest.raises(InvalidInputError):
        accumulate(GradientAccumulator((1, 1)), None, np.zeros((2, 2)), np.zeros((2, 2, 3)))


def test_align_projects_onto_tangent_plane(sphere):
    fr = init_frames(sphere, "normal-complement")
    direction = np.broadcast_to([0, 0, 1.0], sphere.nodes.shape).copy()
    new = align_frames(fr, direction, sphere, AlignmentConfig(delta=None))
    assert new.orthonormality_error() < 1e-10
    k = sphere.normals
    tang = direction - k[..., 2:3] * k
    good = np.linalg.norm(tang, axis=-1) > 1e-6
    cosang = np.einsum("...c,...c->...", new.e1, tang) / np.linalg.norm(tang, axis=-1).clip(1e-300)
    np.testing.assert_allclose(cosang[good], 1.0, atol=1e-12)
    # at the poles the projection vanishes: frames and flags unchanged
    assert np.array_equal(new.e1[~good], fr.e1[~good])
    assert np.all(new.flag[~good] == UNALIGNED)


def test_align_zero_direction_keeps_everything(plane_quad):
    fr = init_frames(plane_quad)
    new = align_frames(fr, np.zeros_like(fr.e1), plane_quad)
    assert np.array_equal(new.e1, fr.e1) and np.array_equal(new.flag, fr.flag)


def test_align_exclusion_ball(plane_quad):
    fr = init_frames(plane_quad)
    direction = np.broadcast_to([0, 1.0, 0], fr.e1.shape).copy()
    new = align_frames(fr, direction, plane_quad,
                       AlignmentConfig(delta=None, exclude_center=(0, 0), exclude_radius=1.0))
    inside = np.linalg.norm(plane_quad.nodes, axis=-1) < 1.0
    assert np.all(new.flag[inside] == UNALIGNED)
    assert np.all(new.flag[~inside] == ALIGNED)
    assert aligned_fraction(new, plane_quad) < 1.0


def _smooth_u(mesh):
    return evaluate(lambda x: np.cos(np.pi * x[..., 0] / 4) * np.cos(np.pi * x[..., 1] / 4), mesh)


def test_validity_rotation_passes():
    m = build_plane_mesh((-2, 2, -2, 2), 0.5, 6)
    fr = init_frames(m)
    res = validity_check(fr, fr.rotated(np.pi / 6), _smooth_u(m), m, delta=0.1, dt=0.01)
    assert res.passed.all()
    assert res.ratio.max() < 1e-8


def test_validity_fails_on_discontinuous_flip():
    m = build_plane_mesh((-2, 2, -2, 2), 1.0, 3)
    fr = init_frames(m)
    e1 = fr.e1.copy()
    e, node = 5, 6                       # an interior node of an interior element
    e1[e, node] = [0, 1, 0]
    bad = FrameField.from_e1(e1, m.normals)
    res = validity_check(fr, bad, _smooth_u(m), m, delta=0.1, dt=0.01)
    assert not res.passed[e].any()


def test_rejected_elements_revert_bit_exactly_and_stick():
    m = build_plane_mesh((-2, 2, -2, 2), 1.0, 3)
    fr = init_frames(m)
    rng = np.random.default_rng(7)
    direction = rng.standard_normal(fr.e1.shape)      # noisy, non-differentiable
    cfg = AlignmentConfig(delta=0.1, dt=0.01)
    u = _smooth_u(m)
    new = align_frames(fr, direction, m, cfg, u=u)
    rej = np.any(new.flag == REJECTED, axis=1)
    assert rej.any()
    assert np.array_equal(new.e1[rej], fr.e1[rej]) and np.array_equal(new.e2[rej], fr.e2[rej])
    again = align_frames(new, direction, m, cfg, u=u)
    assert np.all(again.flag[rej] == REJECTED)
    assert np.array_equal(again.e1, new.e1)
    # accepted elements pass the check against the original frames
    ok = ~rej
    res = validity_check(fr, new, u, m, 0.1, 0.01)
    assert res.passed[ok].all()


def test_align_rejects_wrong_shape(plane_quad):
    with pytest.raises(InvalidInputError):
        align_frames(init_frames(plane_quad), np.zeros((2, 3)), plane_quad)
