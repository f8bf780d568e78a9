import pytest

from permlim import (bridge_source, constant_source, cosine_source,
                     quadratic_cost, solve_potential)


@pytest.fixture(scope="session")
def quad_cost():
    return quadratic_cost(1.0)


@pytest.fixture(scope="session")
def quad_solution(quad_cost):
    """Converged potential for the quadratic cost at the default resolution."""
    return solve_potential(quad_cost, m=400, tol=1e-12)


@pytest.fixture(scope="session")
def quad_solution_fine(quad_cost):
    """High-resolution potential; keeps quadrature error out of rate studies."""
    return solve_potential(quad_cost, m=3200, tol=1e-12)


@pytest.fixture(scope="session")
def quad_source(quad_solution_fine):
    return bridge_source(quad_solution_fine)


@pytest.fixture(scope="session")
def cosine_half():
    return cosine_source(0.5)


@pytest.fixture(scope="session")
def const_source():
    return constant_source()
