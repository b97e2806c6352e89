import numpy as np
import pytest

from genalpha.params import ParameterError, compute_params, inner_block, last_block


def test_rho_zero_values():
    par = compute_params(1, 0.0)
    assert par.alpha[0] == pytest.approx(2.0)
    assert par.beta[0] == pytest.approx(2.5)
    assert par.omega_b[0] == pytest.approx(2.0)
    assert par.omega_s[0] == pytest.approx(2.4)
    assert par.gamma[0] == par.alpha[0] + 0.5


def test_alpha_f_pattern():
    par = compute_params(3, 0.5)
    assert par.alpha_f == (1.0, 1.0, 0.0)
    assert par.order == 6
    assert par.block(0)["gamma"] == par.alpha[0] - 0.5


def test_central_difference_limit():
    # rho -> 1 approaches alpha = 1/2 and a stability bound of 4
    a, b, ob, os_ = last_block(0.999999, 0.999999)
    assert a == pytest.approx(0.5, abs=1e-5)
    assert os_ == pytest.approx(4.0, abs=1e-4)


def test_inner_and_last_share_alpha():
    for rb, rs in [(0.0, 0.0), (0.3, 0.1), (0.9, 0.9)]:
        assert inner_block(rb, rs)[0] == last_block(rb, rs)[0]


@pytest.mark.parametrize("bad", [dict(rho_b=1.0), dict(rho_b=-0.1), dict(rho_b=0.3, rho_s=0.5),
                                 dict(rho_b=[0.1, 0.2, 0.3])])
def test_invalid_controls(bad):
    with pytest.raises(ParameterError):
        compute_params(2, **bad)


def test_invalid_k_and_formula():
    with pytest.raises(ParameterError):
        compute_params(0)
    with pytest.raises(ParameterError):
        compute_params(2, formulas="other")


def test_per_block_controls():
    par = compute_params(2, [0.2, 0.6], [0.1, 0.6])
    assert par.rho_b == (0.2, 0.6)
    assert par.alpha[0] != par.alpha[1]


def test_alternate_inner_formulas_shrink_stability_region():
    from genalpha.spectral import find_stability
    assert compute_params(2, 0.0, formulas="alternate").alpha == compute_params(2, 0.0).alpha
    alt = find_stability(compute_params(2, 0.5, formulas="alternate"))
    ref = find_stability(compute_params(2, 0.5))
    assert alt.per_block[0] < 0.5 * ref.per_block[0]
    assert alt.per_block[1] == ref.per_block[1]
