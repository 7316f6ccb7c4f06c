import math
import warnings

import numpy as np
import pytest

from ratmoment.domain import (BasisSystem, DomainBox, TabulatedFamily,
                              build_tableau, cosine_basis)
from ratmoment.exceptions import ConfigurationError, IllConditionedError, NotInDualConeError
from ratmoment.quadrature import moment_map
from ratmoment.recovery import recover_atoms
from ratmoment.solver import (SolverOptions, continuity_probe, kkt_verify, lower_bound_constants,
                              roundtrip, solve_dual)

LN2 = math.log(2.0)
C_2D = np.array([1 + LN2, LN2 / 2, 1.5 - LN2, (1 - LN2) / 2])


@pytest.fixture(scope="module")
def trig_out(trig_tab):
    return solve_dual([1, -0.5], [1, -1], trig_tab, SolverOptions(track_lower_bound=True))


@pytest.fixture(scope="module")
def square_out(square_tab):
    return solve_dual(C_2D, [0, 1, 0, 0], square_tab, SolverOptions(track_lower_bound=True))


def test_max_entropy_identity(trig_tab):
    out = solve_dual([1, 0], [1, 0], trig_tab)
    np.testing.assert_allclose(out.q_hat, [1, 0], atol=1e-12)
    assert not out.boundary and out.converged


def test_trig_example(trig_out):
    assert np.linalg.norm(trig_out.q_hat - [1, 0]) < 1e-6
    assert not trig_out.boundary and trig_out.converged
    assert len(trig_out.zero_set) == 0


def test_square_example(square_out):
    assert square_out.boundary and square_out.converged
    np.testing.assert_allclose(square_out.q_hat, [0, 1, 0, 1], atol=1e-3)
    np.testing.assert_allclose(square_out.c_hat, [1, 0, 0.5, 0], atol=5e-3)
    assert square_out.c_hat_verdict.region == "boundary"
    assert square_out.zero_set.support_kind == "sampled-curve"
    assert np.max(np.abs(square_out.zero_set.points[:, 0])) < 1e-2


def test_interior_gradient_invariant(trig_out, trig_tab):
    tol = SolverOptions().resolved_grad_tol(np.array([1, -0.5]))
    assert np.linalg.norm(trig_out.gradient_residual) <= tol


@pytest.mark.parametrize("name", ["trig_out", "square_out"])
def test_slackness_invariant(name, request):
    out = request.getfixturevalue(name)
    c = np.array([1, -0.5]) if name == "trig_out" else C_2D
    bound = 1e-6 * (1 + np.linalg.norm(c) * np.linalg.norm(out.q_hat))
    assert abs(out.c_hat @ out.q_hat) <= bound
    assert out.kkt["slackness_ok"]


@pytest.mark.parametrize("name", ["trig_out", "square_out"])
def test_lower_bound_along_iterates(name, request):
    out = request.getfixturevalue(name)
    rows = [r for r in out.trace if "lower_bound" in r]
    assert len(rows) == len(out.trace)
    for r in rows:
        assert r["objective"] >= r["lower_bound"] - 1e-12 * (1 + abs(r["objective"]))


def test_lower_bound_constants_positive(trig_tab):
    eps_c, eps_p = lower_bound_constants(np.array([1, -0.5]), np.array([1, -1]), trig_tab)
    assert eps_c > 0 and eps_p == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["trig_out", "square_out"])
def test_monotone_descent(name, request):
    out = request.getfixturevalue(name)
    rows = out.trace
    for prev, cur in zip(rows, rows[1:]):
        if cur["phase"] == prev["phase"] and cur["mu"] == prev["mu"]:
            assert cur["merit"] <= prev["merit"]
            # below rounding level the accepted step cannot change the merit
            if prev["decrement"] > 1e-12 * (1 + abs(prev["merit"])):
                assert cur["merit"] < prev["merit"]


def test_uniqueness_from_random_starts(trig_tab, rng):
    ref = solve_dual([1, -0.5], [1, -1], trig_tab).q_hat
    for _ in range(20):
        q0 = np.array([rng.uniform(0.5, 3.0), 0.0])
        q0[1] = rng.uniform(-0.9, 0.9) * q0[0]
        out = solve_dual([1, -0.5], [1, -1], trig_tab, q0=q0, verify=False)
        assert np.max(np.abs(out.q_hat - ref)) < 1e-6


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_scaling(trig_tab, t):
    c, p = np.array([1.0, -0.3]), np.array([1.0, -0.7])
    q1 = solve_dual(c, p, trig_tab).q_hat
    qt = solve_dual(t * c, p, trig_tab).q_hat
    np.testing.assert_allclose(qt, q1 / t, rtol=1e-8, atol=1e-8 * np.abs(q1).max())


def test_kkt_verify_interior(trig_out, trig_tab):
    rep = kkt_verify(trig_out, [1, -0.5], [1, -1], trig_tab)
    assert rep["passed"] and rep["c_hat_region"] == "boundary"


def test_kkt_verify_boundary(square_out, square_tab):
    rep = kkt_verify(square_out, C_2D, [0, 1, 0, 0], square_tab)
    assert rep["passed"] and rep["c_hat_region"] == "boundary"
    assert abs(rep["slackness"]) < 1e-8


def test_kkt_verify_detects_perturbation(trig_out, trig_tab):
    from dataclasses import replace

    bad = replace(trig_out, q_hat=trig_out.q_hat + 0.01 * np.eye(2)[0])
    rep = kkt_verify(bad, [1, -0.5], [1, -1], trig_tab)
    assert not rep["moment_ok"] and not rep["passed"]


def test_roundtrip_identity(cos3_tab):
    q = np.array([1.0, 0.3, -0.2])
    np.testing.assert_allclose(roundtrip(q, q, cos3_tab), q, rtol=1e-8)


def test_roundtrip_random(cos3_tab, square_tab, rng):
    for _ in range(5):
        p = np.concatenate([[1.0], rng.uniform(-0.4, 0.4, 2)])
        q = np.concatenate([[1.0], rng.uniform(-0.4, 0.4, 2)])
        rec = roundtrip(p, q, cos3_tab)
        assert np.max(np.abs(rec - q)) < 1e-5 * np.max(np.abs(q))
    for _ in range(3):
        p = np.array([1.0, 0.3, 0.4, -0.2])
        q = np.array([1.0, rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 0.1])
        rec = roundtrip(p, q, square_tab)
        assert np.max(np.abs(rec - q)) < 1e-4 * np.max(np.abs(q))


def test_continuity_zero_direction(trig_tab):
    table = continuity_probe([1, -0.5], [1, -1], [0, 0], [0.1, 0.01], trig_tab)
    assert not table.truncated
    np.testing.assert_allclose(table.q_hats[0], table.q_hats[1], atol=1e-12)


def test_continuity_shrinks_towards_solution(trig_tab):
    steps = [1e-1, 1e-2, 1e-3, 1e-4]
    table = continuity_probe([1, -0.5], [1, -1], [0, 1], steps, trig_tab)
    dist = [np.linalg.norm(q - [1, 0]) for q in table.q_hats]
    assert all(b < a for a, b in zip(dist, dist[1:]))


def test_continuity_path_stays_bounded(trig_tab):
    c, p = np.array([1.0, -0.5]), np.array([1.0, -1.0])
    table = continuity_probe(c, p, [0, 1], [0.5, 0.1, 0.01, 0.001], trig_tab)
    # sublevel bound: J(q) <= J(ref) and J(q) >= eps_c s - eps_p log s with s = max Q
    for t, q in zip(table.steps, table.q_hats):
        pt = p + t * np.array([0, 1.0])
        eps_c, eps_p = lower_bound_constants(c, pt, trig_tab)
        P = trig_tab.values @ pt
        ref = np.array([1.0, 0.0])
        J_ref = c @ ref - trig_tab.weights @ (P * np.log(trig_tab.values @ ref))
        s = np.max(trig_tab.values[P != 0] @ q)
        assert eps_c * s - eps_p * np.log(s) <= J_ref + 1e-9
        # the largest s allowed by the bound
        lo, hi = eps_p / eps_c, 1e12
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if eps_c * mid - eps_p * np.log(mid) <= J_ref else (lo, mid)
        assert s <= hi


def test_continuity_truncates_outside_cone(trig_tab):
    table = continuity_probe([1, -0.5], [1, -1], [0, -1], [0.0, 0.5], trig_tab)
    assert table.truncated and table.steps == [0.0]


def test_weak_star_surrogate():
    tab = build_tableau(cosine_basis(3), 2048)
    a = 0.5
    p = np.array([1 - a / 2, a - 1, -a / 2])
    q_hat = np.array([1.0, -1.0, 0.0])
    c = moment_map(p, q_hat, tab) + 0.3 * tab.basis.values(np.zeros((1, 1)))[0]
    x = tab.nodes[:, 0]
    tests = [np.exp(np.cos(x)), x**2, np.abs(x), np.cos(3 * x), np.sin(x / 2) ** 4]

    def integrals(out, pk):
        phi = (tab.values @ pk) / (tab.values @ out.q_hat)
        vals = np.array([tab.integrate(g * phi) for g in tests])
        if out.boundary and np.linalg.norm(out.c_hat) > 1e-10:
            m = recover_atoms(out.c_hat, out.zero_set, tab.basis)
            xs = m.locations[:, 0]
            gx = [np.exp(np.cos(xs)), xs**2, np.abs(xs), np.cos(3 * xs), np.sin(xs / 2) ** 4]
            vals += np.array([g @ m.masses for g in gx])
        return vals

    limit = integrals(solve_dual(c, p, tab), p)
    exact = np.array([tab.integrate(g * (1 + a * np.cos(x))) for g in tests])
    exact += 0.3 * np.array([np.e, 0.0, 0.0, 1.0, 0.0])
    np.testing.assert_allclose(limit, exact, atol=1e-4)
    errs = []
    for k in (10, 100, 1000):
        pk = p + np.array([1.0 / k, 0, 0])
        errs.append(np.max(np.abs(integrals(solve_dual(c, pk, tab), pk) - limit)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


def test_ill_conditioned_raises():
    fam = TabulatedFamily(func=lambda x: np.column_stack([np.ones(len(x)), x[:, 0],
                                                          x[:, 0] + 1e-9 * x[:, 0] ** 2]),
                          dim=1, n=3)
    basis = BasisSystem(DomainBox(((0.0, 1.0),)), fam, check_rank=False)
    tab = build_tableau(basis, 256)
    c = tab.basis_integral() * 1.1
    with pytest.raises(IllConditionedError, match="resolution"):
        solve_dual(c, [1, 0, 0], tab)


def test_max_iters_reports_nonconvergence(square_tab):
    out = solve_dual(C_2D, [0, 1, 0, 0], square_tab, SolverOptions(max_iters=2), verify=False)
    assert not out.converged and "not converged" in out.message
    assert out.iterations == 2


def test_not_in_dual_cone(trig_tab):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(NotInDualConeError):
            solve_dual([-1, 0], [1, 0], trig_tab)


def test_warns_when_pairing_nonpositive(trig_tab):
    with pytest.warns(RuntimeWarning):
        with pytest.raises(NotInDualConeError):
            solve_dual([-1, 0], [1, 0], trig_tab)


def test_rejects_bad_numerators(trig_tab):
    with pytest.raises(ConfigurationError):
        solve_dual([1, 0], [0, 0], trig_tab)
    with pytest.raises(ConfigurationError):
        solve_dual([1, 0], [0.5, 1], trig_tab)


def test_options_validation():
    with pytest.raises(ConfigurationError):
        SolverOptions(shrink=1.5)
    with pytest.raises(ConfigurationError):
        SolverOptions(max_iters=0)
    with pytest.raises(ConfigurationError):
        SolverOptions(boundary_tol=-1)


def test_outcome_serializes(square_out):
    d = square_out.as_dict()
    assert d["boundary"] is True and len(d["c_hat"]) == 4
    assert d["zero_set"]["support_kind"] == "sampled-curve"
