import logging

import numpy as np
import pytest
import scipy.sparse as sp

from genalpha.assembly import (QuadratureRule, SemiDiscreteSystem, SeparableField, assemble_global,
                               assemble_mass, assemble_stiffness, boundary_projection, parametric_mass_1d,
                               read_triplets, write_triplets)
from genalpha.geometry import (discretization_space, get_domain, quarter_annulus, single_patch, unit_interval,
                               unit_square)
from genalpha.manufactured import get_problem
from genalpha.splines import KnotVector


def test_linear_1d_stencils():
    patch = unit_interval()
    n = 8
    space = discretization_space(patch, 1, n)
    M = assemble_mass(space, patch).toarray()
    K = assemble_stiffness(space, patch).toarray()
    h = 1.0 / n
    np.testing.assert_allclose(M[3, 2:5], h / 6 * np.array([1, 4, 1]))
    np.testing.assert_allclose(K[3, 2:5], np.array([-1, 2, -1]) / h)


def test_identity_mass_is_kronecker():
    patch = unit_square()
    space = discretization_space(patch, 3, 5)
    M = assemble_mass(space, patch)
    m1 = parametric_mass_1d(space.knot_vectors[0])
    m2 = parametric_mass_1d(space.knot_vectors[1])
    np.testing.assert_allclose(M.toarray(), sp.kron(m2, m1).toarray(), atol=1e-14)


@pytest.mark.parametrize("geom", ["quarter_annulus", "singular_sector", "ring"])
def test_stiffness_kills_constants_and_is_symmetric(geom):
    mp = get_domain(geom).discretize(2, 4)
    M, K = assemble_global(mp)
    one = np.ones(mp.size)
    assert np.abs(K @ one).max() < 1e-10
    assert abs(M - M.T).max() == 0.0
    assert abs(K - K.T).max() == 0.0


def area(mp):
    M, _ = assemble_global(mp)
    one = np.ones(mp.size)
    return one @ (M @ one)


def test_mass_integrates_area():
    coarse = area(single_patch(quarter_annulus(), 2, 6))
    fine = area(single_patch(quarter_annulus(), 3, 12))
    assert coarse == pytest.approx(fine, rel=1e-12)
    assert coarse == pytest.approx(0.75 * np.pi, rel=0.02)


def test_mass_positive_definite():
    mp = get_domain("singular_sector").discretize(3, 4)
    M, _ = assemble_global(mp)
    assert np.linalg.eigvalsh(M.toarray()).min() > 0


def test_quadrature_exactness_does_not_change_mass():
    patch = unit_square()
    space = discretization_space(patch, 2, 3)
    a = assemble_mass(space, patch, QuadratureRule()).toarray()
    b = assemble_mass(space, patch, QuadratureRule(extra=3)).toarray()
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_boundary_projection_reproduces_linear_data():
    mp = get_domain("quarter_annulus").discretize(2, 4)
    f = lambda x: 1.0 + 2.0 * x[:, 0] - x[:, 1]
    dofs, vals = boundary_projection(mp, [f])
    # the linear function is in the space: its coefficients are the Greville-point values
    from genalpha.geometry import eval_map
    from genalpha.assembly import SemiDiscreteSystem
    sys = SemiDiscreteSystem(mp, boundary=SeparableField(((f, lambda t, order=0: 1.0 if order == 0 else 0.0),)))
    full = sys.full_vector(np.zeros(sys.n))
    assert np.abs(full[dofs] - vals[:, 0]).max() == 0.0
    # evaluating the interpolant at boundary points gives the data
    from genalpha.splines import tensor_eval
    for pt in ([0.0, 0.3], [1.0, 0.8], [0.5, 0.0]):
        act = tensor_eval(mp.spaces[0], pt)
        x, _, _ = eval_map(mp.patches[0], np.array([pt]))
        coeffs = np.zeros(mp.size)
        coeffs[dofs] = vals[:, 0]
        assert act.values @ coeffs[mp.local_to_global[0][act.flat]] == pytest.approx(f(x)[0], abs=1e-10)


def test_linear_solution_is_steady_state_of_semidiscrete_system():
    prob = get_problem("linear_in_space", dim=2)
    mp = get_domain("quarter_annulus").discretize(2, 4)
    sys = SemiDiscreteSystem(mp, source=prob.source, boundary=prob.boundary)
    U = sys.project(prob.exact, 0.3, 0)
    A = sys.project(prob.exact, 0.3, 2)
    residual = sys.M @ A + sys.K @ U - sys.load(0.3)
    assert np.abs(residual).max() < 1e-10
    assert sys.l2_error(U, prob.exact, 0.3) < 1e-12


def test_finite_difference_source_warns(caplog):
    prob = get_problem("smooth_trig")
    mp = get_domain("quarter_annulus").discretize(2, 3)
    exact = SemiDiscreteSystem(mp, source=prob.source)
    fd = SemiDiscreteSystem(mp, source=lambda x, t: prob.source(x, t), fd_step=1e-4)
    with caplog.at_level(logging.WARNING):
        d1 = fd.load(0.1, 1)
    ref = exact.load(0.1, 1)
    assert np.abs(d1 - ref).max() < 1e-4 * np.abs(ref).max()
    assert any("central differences" in r.message for r in caplog.records)


def test_triplet_roundtrip(tmp_path):
    mp = get_domain("two_squares").discretize(2, 3)
    M, _ = assemble_global(mp)
    path = tmp_path / "m.txt"
    write_triplets(M, path)
    back = read_triplets(path, M.shape)
    assert abs(back - M).max() == 0.0
