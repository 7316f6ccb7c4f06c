import csv
import io

import numpy as np
import pytest

from ratmoment.cones import classify_moment
from ratmoment.domain import build_tableau, cosine_basis
from ratmoment.exceptions import ConfigurationError, RecoveryError
from ratmoment.quadrature import moment_map
from ratmoment.recovery import (NON_UNIQUE, UNIQUE, AtomicMeasure, ZeroSet, discrete_measure,
                                find_zero_set, recover_atoms)
from ratmoment.solver import solve_dual


def test_zero_set_empty_for_positive_q(trig_tab):
    zs = find_zero_set([1, 0], trig_tab)
    assert len(zs) == 0 and zs.support_kind == "isolated-points"


def test_zero_set_isolated_trig(trig_tab):
    zs = find_zero_set([1, -1], trig_tab)
    assert zs.support_kind == "isolated-points"
    assert len(zs) == 1
    assert abs(zs.points[0, 0]) < 1e-4


def test_zero_set_two_isolated(cos3_tab):
    # 1 - cos 2x vanishes at 0 and at both ends +-pi
    zs = find_zero_set([1, 0, -1], cos3_tab)
    assert zs.support_kind == "isolated-points"
    xs = np.sort(zs.points[:, 0])
    assert np.min(np.abs(xs)) < 1e-4
    assert np.max(np.abs(xs)) > np.pi - 1e-3


def test_zero_set_curve(square_tab):
    # x1 (1 + x2) vanishes on the edge x1 = 0
    zs = find_zero_set([0, 1, 0, 1], square_tab)
    assert zs.support_kind == "sampled-curve"
    assert len(zs) > 3 * 4
    assert np.max(np.abs(zs.points[:, 0])) < 1e-2
    assert np.ptp(zs.points[:, 1]) > 0.9


def test_recover_zero_residual_is_empty(trig_tab):
    m = recover_atoms([0.0, 0.0], ZeroSet.empty(1), trig_tab.basis)
    assert len(m) == 0 and m.total_mass == 0.0 and m.uniqueness == UNIQUE


def test_recover_single_atom(cos3_tab):
    a = 0.5
    p = np.array([1 - a / 2, a - 1, -a / 2])
    q = np.array([1.0, -1.0, 0.0])
    alpha0 = cos3_tab.basis.values(np.zeros((1, 1)))[0]
    c = moment_map(p, q, cos3_tab) + 0.3 * alpha0
    out = solve_dual(c, p, cos3_tab)
    assert out.boundary
    m = recover_atoms(out.c_hat, out.zero_set, cos3_tab.basis)
    assert len(m) == 1
    assert m.total_mass == pytest.approx(0.3, abs=1e-4)
    assert abs(m.locations[0, 0]) < 1e-3
    assert m.uniqueness == UNIQUE
    np.testing.assert_allclose(m.moments(cos3_tab.basis), out.c_hat, atol=1e-6)


def test_recover_from_explicit_candidates(cos3_tab):
    basis = cos3_tab.basis
    xs = np.array([[0.0], [2.0]])
    c_hat = basis.values(xs).T @ np.array([0.2, 0.7])
    m = recover_atoms(c_hat, xs, basis)
    np.testing.assert_allclose(m.masses, [0.2, 0.7], atol=1e-10)
    assert m.uniqueness == UNIQUE


def test_recover_too_many_candidates_not_unique(trig_tab):
    basis = trig_tab.basis
    xs = np.array([[-1.0], [0.0], [1.0]])
    c_hat = basis.values(xs[1:2]).T @ np.array([0.5])
    m = recover_atoms(c_hat, xs, basis)
    assert m.uniqueness == NON_UNIQUE
    np.testing.assert_allclose(m.moments(basis), c_hat, atol=1e-8)


def test_recover_residual_failure(trig_tab):
    with pytest.raises(RecoveryError) as err:
        recover_atoms([1.0, -2.0], np.array([[0.0]]), trig_tab.basis)
    assert err.value.residual > 1e-3


def test_recover_without_candidates(trig_tab):
    with pytest.raises(RecoveryError):
        recover_atoms([1.0, 1.0], ZeroSet.empty(1), trig_tab.basis)


def test_recover_curve_is_non_unique(square_tab):
    out = solve_dual(np.array([1 + np.log(2), np.log(2) / 2, 1.5 - np.log(2),
                               (1 - np.log(2)) / 2]), [0, 1, 0, 0], square_tab)
    m = recover_atoms(out.c_hat, out.zero_set, square_tab.basis)
    assert m.uniqueness == NON_UNIQUE and m.support_kind == "sampled-curve"
    assert m.total_mass == pytest.approx(1.0, abs=1e-2)
    assert m.notes


def test_discrete_normalizing_moment(trig_tab):
    m = discrete_measure([1.0, 0.0], trig_tab)
    assert 1 <= len(m) <= 2
    np.testing.assert_allclose(m.moments(trig_tab.basis), [1.0, 0.0], atol=1e-8)


def test_discrete_single_node(trig_tab):
    x = trig_tab.nodes[300:301]
    c = trig_tab.basis.values(x)[0] * 0.7
    m = discrete_measure(c, trig_tab)
    np.testing.assert_allclose(m.moments(trig_tab.basis), c, atol=1e-8)
    assert len(m) <= 2


def test_discrete_boundary_atom(trig_tab):
    m = discrete_measure([1.0, 1.0], trig_tab)
    assert len(m) == 1
    assert abs(m.locations[0, 0]) < 1e-12
    assert m.masses[0] == pytest.approx(1.0, abs=1e-10)


def test_discrete_boundary_orthogonal_to_witness(cos3_tab):
    basis = cos3_tab.basis
    # atoms at 0 and pi are zeros of the witness 1 - cos 2x
    c = basis.values(np.array([[0.0], [np.pi]])).T @ np.array([0.4, 0.6])
    verdict = classify_moment(c, cos3_tab)
    assert verdict.region == "boundary"
    m = discrete_measure(c, cos3_tab, region=verdict.region)
    w = np.array([1.0, 0.0, -1.0])
    assert len(m) <= cos3_tab.n - 1
    assert np.all(np.abs(basis.values(m.locations) @ w) < 1e-8)


def test_discrete_vertex_bound(cos3_tab, rng):
    for _ in range(10):
        xs = rng.uniform(-3, 3, size=(5, 1))
        c = cos3_tab.basis.values(xs).T @ rng.uniform(0.1, 1.0, 5)
        m = discrete_measure(c, cos3_tab)
        assert len(m) <= cos3_tab.n
        assert np.all(m.masses > 0)
        np.testing.assert_allclose(m.moments(cos3_tab.basis), c, atol=1e-7)


def test_discrete_exterior_raises(trig_tab):
    with pytest.raises(ConfigurationError):
        discrete_measure([-1.0, 0.0], trig_tab)


def test_negative_mass_rejected():
    with pytest.raises(ValueError):
        AtomicMeasure(np.zeros((1, 1)), np.array([-1.0]), UNIQUE, "isolated-points")


def test_csv_format():
    m = AtomicMeasure(np.array([[0.0, 0.5], [1.0, 0.25]]), np.array([0.5, 0.125]), UNIQUE,
                      "isolated-points")
    rows = list(csv.reader(io.StringIO(m.to_csv())))
    assert rows[0] == ["x1", "x2", "mass"]
    assert [float(v) for v in rows[2]] == [1.0, 0.25, 0.125]


def test_as_dict_round_trip():
    m = AtomicMeasure(np.array([[0.1]]), np.array([2.0]), UNIQUE, "isolated-points")
    d = m.as_dict()
    assert d["total_mass"] == 2.0 and d["atoms"][0]["location"] == [0.1]


def test_grid_dependence_of_candidates():
    # the refined zero does not depend on where the grid nodes fall
    locs = []
    for res in (257, 1024):
        tab = build_tableau(cosine_basis(2), res)
        locs.append(find_zero_set([1, -1], tab).points[0, 0])
    assert abs(locs[0] - locs[1]) < 1e-4
