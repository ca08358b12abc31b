import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interdiff import (ConfigError, DomainError, Interface, MediumSpec, Piece,
                       coeff_at, derive_lambdas, phi_sequence,
                       piecewise_constant_medium, validate_model)
from interdiff.medium import beta_ratio, derived_lambda


def make_medium(**overrides):
    fields = dict(
        interfaces=(Interface(0.0, lam=2.0 / 3.0),),
        pieces=(
            Piece(-1.0, 0.0, (0.5, 0, 0, 0), (1.0, 0, 0, 0)),
            Piece(0.0, 1.0, (0.5, 0, 0, 0), (1.0, 0, 0, 0)),
        ),
        window=(-1.0, 1.0),
        bounds=(0.1, 2.0),
    )
    fields.update(overrides)
    return MediumSpec(**fields)


class TestValidation:
    def test_clean_single_interface(self):
        report = validate_model(make_medium())
        assert report.ok, report.summary()
        assert report.info["eta_regime"] == "continuous"

    def test_coefficient_reaching_zero_is_a_lower_bound_violation(self):
        # D = 0.5 - x touches 0 at x = 0.5, inside the right piece
        bad = make_medium(pieces=(
            Piece(-1.0, 0.0, (0.5, 0, 0, 0), (1.0, 0, 0, 0)),
            Piece(0.0, 1.0, (0.5, -1.0, 0, 0), (1.0, 0, 0, 0)),
        ))
        report = validate_model(bad)
        assert any(v.code == "coefficient-lower-bound" for v in report.violations)

    def test_out_of_order_interfaces_flagged(self):
        bad = MediumSpec(
            interfaces=(Interface(0.5, lam=0.5), Interface(-0.5, lam=0.5)),
            pieces=(
                Piece(-1.0, 0.5, (1, 0, 0, 0), (1, 0, 0, 0)),
                Piece(0.5, -0.5, (1, 0, 0, 0), (1, 0, 0, 0)),
                Piece(-0.5, 1.0, (1, 0, 0, 0), (1, 0, 0, 0)),
            ),
            window=(-1.0, 1.0), bounds=(0.1, 2.0))
        report = validate_model(bad)
        assert any(v.code == "interface-order" for v in report.violations)

    def test_lambda_outside_unit_interval_flagged(self):
        report = validate_model(make_medium(interfaces=(Interface(0.0, lam=1.0),)))
        assert any(v.code == "lambda-range" for v in report.violations)

    def test_lambda_beta_disagreement_flagged(self):
        report = validate_model(make_medium(
            interfaces=(Interface(0.0, lam=0.3, beta_plus=1.0, beta_minus=1.0),)))
        assert any(v.code == "lambda-beta-consistency" for v in report.violations)

    def test_validate_is_idempotent(self):
        spec = make_medium()
        first = validate_model(spec)
        second = validate_model(spec)
        assert first.ok == second.ok
        assert first.info == second.info

    def test_decay_sum_reported(self):
        report = validate_model(make_medium())
        assert report.info["lambda_decay_sum"] == pytest.approx(0.5)

    def test_eta_jump_recorded_not_rejected(self, jump_eta_medium):
        report = validate_model(jump_eta_medium)
        assert report.ok
        assert report.info["eta_regime"] == "jumping"


class TestCoeffAt:
    def test_constant_coefficient_both_sides(self):
        spec = make_medium()
        for side in ("left", "right"):
            d, eta = coeff_at(spec, 0.3, side)
            assert d == 0.5 and eta == 1.0

    def test_one_sided_limits_at_interface(self, d_jump_medium):
        assert coeff_at(d_jump_medium, 0.0, "left")[0] == 1.0
        assert coeff_at(d_jump_medium, 0.0, "right")[0] == 2.0

    def test_polynomial_evaluation(self):
        spec = MediumSpec(
            interfaces=(), pieces=(Piece(0.0, 1.0, (1, 1, 0, 0), (1, 0, 0, 0)),),
            window=(0.0, 1.0), bounds=(0.5, 3.0))
        d_left, _ = coeff_at(spec, 0.5, "left")
        d_right, _ = coeff_at(spec, 0.5, "right")
        assert d_left == d_right == pytest.approx(1.5)

    def test_outside_window_rejected(self, d_jump_medium):
        with pytest.raises(DomainError):
            coeff_at(d_jump_medium, 5.0, "left")


class TestDeriveLambdas:
    def test_full_symmetry_gives_half(self):
        spec = piecewise_constant_medium([0.0], [1.5, 1.5], [1.0, 1.0], (-1, 1),
                                         beta_pairs=[(1.0, 1.0)])
        assert spec.interfaces[0].lam == pytest.approx(0.5)

    def test_area_weighted_diffusivity_formula(self, d_jump_medium):
        # A+- = 1 (betas 1), D- = 1, D+ = 2: lambda = A+D+/(A+D+ + A-D-)
        assert d_jump_medium.interfaces[0].lam == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_area_jump_only(self):
        # D = 1 both sides, A- = 2, A+ = 1, betas = 1/A
        spec = piecewise_constant_medium([0.0], [1.0, 1.0], [1.0, 1.0], (-1, 1),
                                         beta_pairs=[(1.0, 0.5)])
        assert spec.interfaces[0].lam == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_missing_betas_rejected(self):
        spec = make_medium(interfaces=(Interface(0.0),))
        with pytest.raises(ConfigError):
            derive_lambdas(spec)

    def test_existing_lambda_kept(self):
        spec = make_medium()
        assert derive_lambdas(spec).interfaces[0].lam == spec.interfaces[0].lam


class TestPhiSequence:
    def test_no_interfaces_gives_unit(self, brownian_medium):
        assert phi_sequence(brownian_medium).phi == {0: 1.0}

    def test_single_interface_downward(self):
        # beta+/beta- = A-/A+ = 2 for A+ = 1, A- = 2
        spec = piecewise_constant_medium([0.0], [1.0, 1.0], [1.0, 1.0], (-1, 1),
                                         beta_pairs=[(1.0, 0.5)])
        phi = phi_sequence(spec)
        assert phi[0] == 1.0
        assert phi[-1] == pytest.approx(0.5, abs=1e-15)

    def test_two_interfaces_each_direction(self):
        spec = MediumSpec(
            interfaces=(Interface(-0.5, beta_plus=2.0, beta_minus=1.0),
                        Interface(0.5, beta_plus=3.0, beta_minus=1.0)),
            pieces=(Piece(-1.0, -0.5, (1, 0, 0, 0), (1, 0, 0, 0)),
                    Piece(-0.5, 0.5, (1, 0, 0, 0), (1, 0, 0, 0)),
                    Piece(0.5, 1.0, (1, 0, 0, 0), (1, 0, 0, 0))),
            window=(-1.0, 1.0), bounds=(0.1, 2.0))
        spec = derive_lambdas(spec)
        phi = phi_sequence(spec)
        assert phi[0] == 1.0
        assert phi[1] == pytest.approx(3.0, abs=1e-14)
        assert phi[-1] == pytest.approx(0.5, abs=1e-14)

    def test_recursion_holds_in_both_directions(self, jump_eta_medium):
        phi = phi_sequence(jump_eta_medium)
        spec = jump_eta_medium
        for j in range(spec.n_interfaces):
            x = spec.interfaces[j].x
            lam = spec.interfaces[j].lam
            d_minus = coeff_at(spec, x, "left")[0]
            d_plus = coeff_at(spec, x, "right")[0]
            lhs = phi[j] / phi[j - 1]
            rhs = d_plus * (1 - lam) / (d_minus * lam)
            assert lhs == pytest.approx(rhs, rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(
    d_minus=st.floats(0.2, 5.0), d_plus=st.floats(0.2, 5.0),
    beta_plus=st.floats(0.1, 10.0), beta_minus=st.floats(0.1, 10.0),
)
def test_beta_ratio_reconstruction_round_trip(d_minus, d_plus, beta_plus, beta_minus):
    """Derived lambda plus one-sided D recovers the input beta ratio."""
    lam = derived_lambda(d_minus, d_plus, beta_plus, beta_minus)
    assert 0.0 < lam < 1.0
    recovered = d_plus * (1.0 - lam) / (d_minus * lam)
    assert recovered == pytest.approx(beta_plus / beta_minus, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.05, 0.95), d_minus=st.floats(0.2, 5.0),
       d_plus=st.floats(0.2, 5.0))
def test_beta_ratio_from_lambda_matches_definition(lam, d_minus, d_plus):
    spec = MediumSpec(
        interfaces=(Interface(0.0, lam=lam),),
        pieces=(Piece(-1.0, 0.0, (d_minus, 0, 0, 0), (1, 0, 0, 0)),
                Piece(0.0, 1.0, (d_plus, 0, 0, 0), (1, 0, 0, 0))),
        window=(-1.0, 1.0), bounds=(0.1, 6.0))
    assert beta_ratio(spec, 0) == pytest.approx(
        d_plus * (1 - lam) / (d_minus * lam), rel=1e-13)


def test_piecewise_constructor_shape_errors():
    with pytest.raises(ConfigError):
        piecewise_constant_medium([0.0], [1.0], [1.0, 1.0], (-1, 1),
                                  lambdas=[0.5])
    with pytest.raises(ConfigError):
        piecewise_constant_medium([0.0], [1.0, 1.0], [1.0, 1.0], (-1, 1))


def test_piece_index_sides(d_jump_medium):
    assert d_jump_medium.piece_index_at(0.0, "left") == 0
    assert d_jump_medium.piece_index_at(0.0, "right") == 1
    assert d_jump_medium.piece_index_at(-3.0, "left") == 0
    assert d_jump_medium.piece_index_at(3.0, "right") == 1
