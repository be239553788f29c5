import numpy as np
import pytest
from fractions import Fraction
from pathlib import Path

from sdstab import SystemDef
from sdstab.lie import ScalarField, VectorField
from sdstab.symcalc import Const, Var, Mul

SYSTEMS_DIR = Path(__file__).resolve().parent.parent / "systems"


@pytest.fixture(scope="session")
def systems_dir():
    return SYSTEMS_DIR


@pytest.fixture(scope="session")
def dblint():
    """Double integrator: f = (x2, 0), g = (0, 1), V = |x|^2/2."""
    return SystemDef(
        VectorField.from_strings(["x2", "0"], 2),
        VectorField.from_strings(["0", "1"], 2),
        ScalarField.from_string("0.5*(x1^2+x2^2)", 2),
    )


@pytest.fixture(scope="session")
def planar_cubic():
    """f = (-x1*x2^2, 0), g = (0, 1): certifies P3 with N = 2 on the x1 axis."""
    return SystemDef(
        VectorField.from_strings(["-x1*x2^2", "0"], 2),
        VectorField.from_strings(["0", "1"], 2),
        ScalarField.from_string("0.5*(x1^2+x2^2)", 2),
    )


@pytest.fixture(scope="session")
def rotation3():
    """Planar rotation with x3-modulated rates (alpha = 1+x3, beta = 1)."""
    return SystemDef(
        VectorField.from_strings(["x2*(1+x3)", "-x1", "0"], 3),
        VectorField.from_strings(["0", "0", "1"], 3),
        ScalarField.from_string("0.5*(x1^2+x2^2+x3^2)", 3),
    )


@pytest.fixture(scope="session")
def drift_decay():
    """f = (x2, -x1^3), g = (0, 1): certifies P1 with N = 1 on the x1 axis
    for 0 < |x1| < 1 (f^2 V = -x1^4 (1 - x1^2) there)."""
    return SystemDef(
        VectorField.from_strings(["x2", "-x1^3"], 2),
        VectorField.from_strings(["0", "1"], 2),
        ScalarField.from_string("0.5*(x1^2+x2^2)", 2),
    )


@pytest.fixture(scope="session")
def inert_system():
    """f identically zero: every axis point with gV = 0 is inconclusive."""
    return SystemDef(
        VectorField.from_strings(["0", "0"], 2),
        VectorField.from_strings(["0", "1"], 2),
        ScalarField.from_string("0.5*(x1^2+x2^2)", 2),
    )


# --- finite-difference oracles (independent of the symbolic path) -------------

FD_H = 1e-5


def fd_gradient(fn, x, h=FD_H):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(len(x)):
        step = np.zeros_like(x)
        step[i] = h
        out[i] = (fn(x + step) - fn(x - step)) / (2 * h)
    return out


def fd_jacobian(field_fn, x, h=FD_H):
    x = np.asarray(x, dtype=float)
    n = len(x)
    jac = np.zeros((n, n))
    for j in range(n):
        step = np.zeros(n)
        step[j] = h
        jac[:, j] = (field_fn(x + step) - field_fn(x - step)) / (2 * h)
    return jac


def fd_bracket(X: VectorField, Y: VectorField, x, h=FD_H):
    """[X,Y](x) = J_Y(x) X(x) - J_X(x) Y(x) with central-difference Jacobians."""
    xf = X.evaluate
    yf = Y.evaluate
    return fd_jacobian(yf, x, h) @ xf(x) - fd_jacobian(xf, x, h) @ yf(x)


# --- random polynomial material (fixed seeds, deterministic) -------------------

def random_poly_expr(rng, dim, n_terms=3, max_degree=3):
    terms = None
    for _ in range(rng.integers(1, n_terms + 1)):
        coeff = Const(Fraction(int(rng.integers(-8, 9)), 4))
        term = coeff
        degree = int(rng.integers(0, max_degree + 1))
        for _ in range(degree):
            term = Mul(term, Var(int(rng.integers(1, dim + 1))))
        terms = term if terms is None else terms + term
    return terms


def random_poly_field(rng, dim, **kw):
    comps = tuple(random_poly_expr(rng, dim, **kw) for _ in range(dim))
    return VectorField(comps, dim)


def random_point(rng, dim, scale=1.0):
    return rng.uniform(-scale, scale, size=dim)
