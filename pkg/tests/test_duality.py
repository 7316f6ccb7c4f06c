import math

import mpmath
import numpy as np
import pytest

from ratmoment.domain import build_tableau, cosine_basis
from ratmoment.duality import (DensityOnGrid, density_from_solution, duality_gap, duality_table,
                               entropy_constant, kl_divergence, primal_objective, primal_residual)
from ratmoment.exceptions import ConfigurationError
from ratmoment.recovery import recover_atoms
from ratmoment.solver import solve_dual

LN2 = math.log(2.0)
C_2D = np.array([1 + LN2, LN2 / 2, 1.5 - LN2, (1 - LN2) / 2])


def test_entropy_constant_unit(trig_tab):
    assert entropy_constant([1, 0], trig_tab) == pytest.approx(-1.0, abs=1e-14)


def test_primal_objective_constant_density(trig_tab):
    ones = DensityOnGrid(np.ones(trig_tab.size))
    assert primal_objective([1, 0], ones, trig_tab) == pytest.approx(0.0, abs=1e-14)
    e = DensityOnGrid(np.full(trig_tab.size, math.e))
    assert primal_objective([1, 0], e, trig_tab) == pytest.approx(1.0, abs=1e-13)


def test_primal_objective_raw_volume():
    tab = build_tableau(cosine_basis(2, normalize=False), 512)
    e = DensityOnGrid(np.full(tab.size, math.e))
    assert primal_objective([1, 0], e, tab) == pytest.approx(2 * math.pi, rel=1e-13)


def test_entropy_constant_trig_oracle(trig_tab):
    mpmath.mp.dps = 30
    # 1 - cos x = 2 sin^2(x/2) avoids cancellation near 0
    f = lambda x: 2 * mpmath.sin(x / 2) ** 2 * (mpmath.log(2 * mpmath.sin(x / 2) ** 2) - 1)
    ref = float(2 * mpmath.quad(f, [0, mpmath.pi]) / (2 * mpmath.pi))
    assert entropy_constant([1, -1], trig_tab) == pytest.approx(ref, abs=1e-6)


def test_gap_max_entropy(trig_tab):
    out = solve_dual([1, 0], [1, 0], trig_tab)
    assert duality_gap([1, 0], [1, 0], out, trig_tab) < 1e-10


def test_gap_trig(trig_tab):
    out = solve_dual([1, -0.5], [1, -1], trig_tab)
    t = duality_table([1, -0.5], [1, -1], out.q_hat, trig_tab)
    assert t["gap"] < 1e-7
    assert t["primal"] == pytest.approx(t["dual"] + t["entropy_constant"], abs=1e-7)


def test_gap_square(square_tab):
    out = solve_dual(C_2D, [0, 1, 0, 0], square_tab)
    assert duality_gap(C_2D, [0, 1, 0, 0], out, square_tab) < 1e-6


def test_kl_self_is_zero(trig_tab):
    P = trig_tab.values @ np.array([1.0, -0.5])
    assert kl_divergence([1, -0.5], DensityOnGrid(P), trig_tab) == pytest.approx(0.0, abs=1e-14)


def test_kl_scaled_density(trig_tab):
    two = DensityOnGrid(np.full(trig_tab.size, 2.0))
    assert kl_divergence([1, 0], two, trig_tab) == pytest.approx(-LN2, abs=1e-14)


def test_kl_infinite_on_vanishing_density(trig_tab):
    vals = np.ones(trig_tab.size)
    vals[10] = 0.0
    assert kl_divergence([1, 0], DensityOnGrid(vals), trig_tab) == np.inf


def test_minus_inf_sentinel(trig_tab):
    vals = np.ones(trig_tab.size)
    vals[10] = 0.0
    assert primal_objective([1, 0], DensityOnGrid(vals), trig_tab) == -np.inf


def test_optimality_against_feasible_perturbations(cos3_tab, rng):
    c, p = np.array([1.0, 0.2, -0.1]), np.array([1.0, -0.4, 0.1])
    out = solve_dual(c, p, cos3_tab)
    assert not out.boundary
    best = density_from_solution(p, out.q_hat, cos3_tab)
    I_best = primal_objective(p, best, cos3_tab)
    kl_best = kl_divergence(p, best, cos3_tab)
    A = cos3_tab.values * np.sqrt(cos3_tab.weights)[:, None]
    basis_q, _ = np.linalg.qr(A)
    x = cos3_tab.nodes[:, 0]
    for _ in range(20):
        g = rng.normal(size=4) @ np.array([np.sin(k * x + rng.uniform()) for k in range(3, 7)])
        g = g * np.sqrt(cos3_tab.weights)
        g = g - basis_q @ (basis_q.T @ g)
        delta = g / np.sqrt(cos3_tab.weights)
        delta *= 0.2 * best.values.min() / np.max(np.abs(delta))
        phi = DensityOnGrid(best.values + delta)
        np.testing.assert_allclose(phi.moments(cos3_tab), best.moments(cos3_tab), atol=1e-12)
        I_phi = primal_objective(p, phi, cos3_tab)
        assert I_phi <= I_best + 1e-8
        kl_phi = kl_divergence(p, phi, cos3_tab)
        assert kl_phi - kl_best == pytest.approx(I_best - I_phi, abs=1e-10)


def test_primal_feasibility_interior(cos3_tab):
    c, p = np.array([1.0, 0.2, -0.1]), np.array([1.0, -0.4, 0.1])
    out = solve_dual(c, p, cos3_tab)
    dens = density_from_solution(p, out.q_hat, cos3_tab)
    assert primal_residual(c, dens, cos3_tab) < 1e-7


def test_primal_feasibility_with_atoms(square_tab):
    out = solve_dual(C_2D, [0, 1, 0, 0], square_tab)
    atoms = recover_atoms(out.c_hat, out.zero_set, square_tab.basis)
    dens = density_from_solution([0, 1, 0, 0], out.q_hat, square_tab, atoms)
    assert primal_residual(C_2D, dens, square_tab) < 1e-6
    assert dens.total_mass(square_tab) == pytest.approx(C_2D[0], abs=1e-6)


def test_singular_part_does_not_enter(square_tab):
    out = solve_dual(C_2D, [0, 1, 0, 0], square_tab)
    atoms = recover_atoms(out.c_hat, out.zero_set, square_tab.basis)
    bare = density_from_solution([0, 1, 0, 0], out.q_hat, square_tab)
    full = density_from_solution([0, 1, 0, 0], out.q_hat, square_tab, atoms)
    assert primal_objective([0, 1, 0, 0], bare, square_tab) == \
        primal_objective([0, 1, 0, 0], full, square_tab)


def test_zero_over_zero_density(square_tab):
    # P = x1 and Q = x1 (1 + x2) both vanish on no node, but P = 0 nodes give 0
    dens = density_from_solution([0, 1, 0, 0], [0, 1, 0, 1], square_tab)
    assert np.all(np.isfinite(dens.values))


def test_density_validation(trig_tab):
    with pytest.raises(ConfigurationError):
        DensityOnGrid(np.array([1.0, -1.0]))
    with pytest.raises(ConfigurationError):
        primal_objective([1, 0], DensityOnGrid(np.ones(3)), trig_tab)
    with pytest.raises(ConfigurationError):
        density_from_solution([1, 0], [-1, 0], trig_tab)
