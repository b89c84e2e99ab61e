import json

import numpy as np
import pytest

import dualgrad as dg


def test_problems_listed():
    assert dg.list_problems() == sorted(dg.list_problems())
    assert "diag_synthetic" in dg.list_problems()


def test_plain_and_primal_forms_agree():
    p = dg.make_problem("gravity_fredholm", 40, 1)
    y = dg.add_noise(p.y_exact, 1e-3, 7)
    gamma = 0.5 / dg.estimate_norm(p.op) ** 2
    a = dg.dual_gradient_solve(p.op, y, p.penalty, gamma, n_max=50, record_every=1)
    b = dg.primal_form_solve(p.op, y, p.penalty, gamma, n_max=50, record_every=1)
    assert a.n_stop == 50
    assert np.max(np.abs(a.x - b.x)) < 1e-10
    assert all(r1 <= r0 + 1e-12 for r0, r1 in zip(a.residuals, a.residuals[1:]))


def test_discrepancy_stop_on_diagonal_problem():
    p = dg.make_problem("diag_synthetic", 50, 0)
    y = dg.add_noise(p.y_exact, 1e-3, 3)
    r = dg.dual_gradient_solve(p.op, y, p.penalty, 0.5, delta=1e-3, tau=1.5)
    assert r.termination == "discrepancy_met"
    assert np.linalg.norm(p.op.apply(r.x) - y) <= 1.5e-3


def test_identity_one_step():
    op = dg.LinearOperator.identity(3)
    r = dg.dual_gradient_solve(op, np.array([1.0, 2.0, 3.0]), dg.quadratic(), 1.0, n_max=1)
    assert np.allclose(r.x, [1.0, 2.0, 3.0])


def test_entropy_iterates_are_probability_vectors():
    p = dg.make_problem("density_recovery", 40, 2)
    w = p.op.domain_weights
    y = dg.add_noise(p.y_exact, 1e-3, 5)
    r = dg.dual_gradient_solve(p.op, y, p.penalty, 0.1, n_max=30, record_every=1)
    for x in r.iterates:
        assert np.all(x >= 0)
        assert abs(w @ x - 1.0) < 1e-12
    lw = dg.entropic_landweber_solve(p.op, y, 0.1, n_max=30)
    assert abs(w @ lw.x - 1.0) < 1e-12


def test_fit_and_measures():
    d = np.logspace(-1, -5, 5)
    slope, _, r2 = dg.fit_rate(d, 2.0 * d**0.5)
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert r2 == pytest.approx(1.0)
    q = dg.quadratic()
    assert dg.error_measure("norm", q, np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(5.0)


def test_config_validation_and_study(tmp_path):
    bad = {"problem": {"name": "diag_synthetic"}, "stopping": {"tau": 0.5}, "deltas": [1e-3]}
    assert any("tau" in e for e in dg.validate_config(json.dumps(bad)))
    cfg = {
        "problem": {"name": "diag_synthetic", "n": 40},
        "deltas": [1e-2, 3e-3, 1e-3, 3e-4],
        "seeds_per_delta": 2,
    }
    fits = dg.rate_study(json.dumps(cfg), str(tmp_path), 2)
    assert "norm" in fits
    assert (tmp_path / "points.csv").exists()


def test_bad_arguments_raise():
    with pytest.raises(ValueError):
        dg.make_problem("tomography", 32, 0)
    op = dg.LinearOperator.identity(2)
    with pytest.raises(ValueError):
        dg.dual_gradient_solve(op, np.ones(2), dg.quadratic(), 1.0)
