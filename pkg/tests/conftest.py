import numpy as np
import pytest

from interdiff import (ScaleSpeed, build_grid, chain_parameters,
                       piecewise_constant_medium)


@pytest.fixture(scope="session")
def d_jump_medium():
    """Single interface at 0 with D- = 1, D+ = 2, eta = 1, unit betas."""
    return piecewise_constant_medium([0.0], [1.0, 2.0], [1.0, 1.0], (-3.0, 3.0),
                                     beta_pairs=[(1.0, 1.0)])


@pytest.fixture(scope="session")
def jump_eta_medium():
    """D- = 1, D+ = 2, eta- = 1, eta+ = 3, flux continuity (lambda = 2/3)."""
    return piecewise_constant_medium([0.0], [1.0, 2.0], [1.0, 3.0], (-3.0, 3.0),
                                     beta_pairs=[(1.0, 1.0)])


@pytest.fixture(scope="session")
def brownian_medium():
    """No interfaces, D = 1, eta = 1: standard Brownian motion."""
    return piecewise_constant_medium([], [1.0], [1.0], (-2.0, 2.0), lambdas=[])


@pytest.fixture(scope="session")
def d_jump_scale(d_jump_medium):
    return ScaleSpeed(d_jump_medium)


@pytest.fixture(scope="session")
def jump_eta_scale(jump_eta_medium):
    return ScaleSpeed(jump_eta_medium)


@pytest.fixture(scope="session")
def brownian_chain(brownian_medium):
    grid = build_grid(brownian_medium, 0.05)
    return chain_parameters(brownian_medium, grid)


@pytest.fixture(scope="session")
def d_jump_chain(d_jump_medium, d_jump_scale):
    grid = build_grid(d_jump_medium, 0.01)
    return chain_parameters(d_jump_medium, grid, d_jump_scale)


def dense_sample(spec, per_piece=41):
    """Sample points strictly inside every piece."""
    xs = []
    for piece in spec.pieces:
        inner = np.linspace(piece.left, piece.right, per_piece + 2)[1:-1]
        xs.extend(inner)
    return np.array(xs)
