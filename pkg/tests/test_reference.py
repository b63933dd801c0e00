import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmfatlas.reference import QUAD, TRI, gauss_lobatto, reference_element


@pytest.mark.parametrize("kind", [TRI, QUAD])
@pytest.mark.parametrize("p", [1, 2, 4, 6])
def test_node_counts(kind, p):
    ref = reference_element(kind, p)
    expect = (p + 1) * (p + 2) // 2 if kind == TRI else (p + 1) ** 2
    assert ref.n_nodes == expect
    assert ref.nodes.shape == (expect, 2)


@pytest.mark.parametrize("kind, area", [(TRI, 2.0), (QUAD, 4.0)])
def test_cubature_weights_sum_to_area(kind, area):
    ref = reference_element(kind, 5)
    assert ref.cub_weights.sum() == pytest.approx(area, rel=1e-13)


def test_tri_cubature_exact_monomial():
    # int over the reference triangle of (1+r)^a (1+s)^b = 2^(a+b+2) a! b! / (a+b+2)!
    from math import factorial
    p = 4
    ref = reference_element(TRI, p)
    r, s = ref.cub_points.T
    for a in range(0, 2 * p + 2):
        for b in range(0, 2 * p + 2 - a):
            exact = 2.0 ** (a + b + 2) * factorial(a) * factorial(b) / factorial(a + b + 2)
            got = np.sum(ref.cub_weights * (1 + r) ** a * (1 + s) ** b)
            assert got == pytest.approx(exact, rel=1e-11)


def test_gauss_lobatto_endpoints_and_symmetry():
    x = gauss_lobatto(5)
    assert x[0] == pytest.approx(-1.0) and x[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(x, -x[::-1], atol=1e-14)
    # interior points of 6-point GLL are roots of P5'
    from numpy.polynomial import legendre
    d = legendre.legder([0] * 5 + [1])
    np.testing.assert_allclose(np.sort(legendre.legroots(d)), x[1:-1], atol=1e-12)


@pytest.mark.parametrize("kind", [TRI, QUAD])
def test_interp_is_identity_at_nodes(kind):
    ref = reference_element(kind, 3)
    np.testing.assert_allclose(ref.interp(ref.nodes), np.eye(ref.n_nodes), atol=1e-12)


@pytest.mark.parametrize("kind", [TRI, QUAD])
def test_differentiation_exact_for_polynomials(kind):
    p = 4
    ref = reference_element(kind, p)
    r, s = ref.nodes.T
    f = r ** 2 * s + 3 * s ** 3 - r
    np.testing.assert_allclose(ref.dr @ f, 2 * r * s - 1, atol=1e-11)
    np.testing.assert_allclose(ref.ds @ f, r ** 2 + 9 * s ** 2, atol=1e-11)


@pytest.mark.parametrize("kind", [TRI, QUAD])
def test_face_nodes_lie_on_edges(kind):
    ref = reference_element(kind, 3)
    for f in range(ref.n_faces):
        a = ref.vertices[f]
        b = ref.vertices[(f + 1) % ref.n_faces]
        pts = ref.nodes[ref.face_node_indices(f)]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        np.testing.assert_allclose(cross, 0.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([TRI, QUAD]), st.integers(1, 6),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_interpolation_reproduces_linear_functions(kind, p, c):
    ref = reference_element(kind, p)
    f = c[0] + c[1] * ref.nodes[:, 0] + c[2] * ref.nodes[:, 1]
    pts = ref.cub_points
    g = ref.interp(pts) @ f
    np.testing.assert_allclose(g, c[0] + c[1] * pts[:, 0] + c[2] * pts[:, 1], atol=1e-10)
