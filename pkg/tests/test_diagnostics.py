import json

import numpy as np
import pytest

from fismo.diagnostics import (
    AuditReport,
    MetricsRecord,
    Snapshot,
    kappa_summary,
    lemma_audit,
    ordering_holds,
    rate_fit,
    summarize_gradients,
    validate_records,
)
from fismo.errors import InsufficientData, InvalidInput
from fismo.optimizers import fismo_init, fismo_step
from fismo.problems import mlp_problem, quadratic_problem


def make_records(values, kappa=1.0):
    return [
        MetricsRecord(step=t + 1, loss=1.0, grad_nuclear=v, grad_frobenius=v / 2.0,
                      update_kappa=kappa)
        for t, v in enumerate(values)
    ]


def record_fismo_trajectory(problem, steps, eta, seed, gamma=None, backend="exact"):
    rng = np.random.default_rng(seed)
    st = fismo_init(problem.init_weights(rng)[0], eta=eta, gamma=gamma,
                    polar_backend=backend)
    snaps = []
    for t in range(1, steps + 1):
        w_before = st.weights
        g = problem.full_gradient((w_before,))[0]
        new = fismo_step(st, g)
        snaps.append(Snapshot(step=t, w_before=w_before, w_after=new.weights, grad=g,
                              momentum=new.momentum, p=new.precond.p, q=new.precond.q,
                              eta=eta, beta=st.beta))
        st = new
    return snaps


# ----------------------------------------------------------------- records

def test_validate_records():
    validate_records(make_records([3.0, 2.0, 1.0]))
    with pytest.raises(InvalidInput):
        validate_records([
            MetricsRecord(step=2, loss=0.0, grad_nuclear=1.0, grad_frobenius=0.5, update_kappa=1.0),
            MetricsRecord(step=2, loss=0.0, grad_nuclear=1.0, grad_frobenius=0.5, update_kappa=1.0),
        ])
    with pytest.raises(InvalidInput):
        validate_records([
            MetricsRecord(step=1, loss=0.0, grad_nuclear=0.5, grad_frobenius=1.0, update_kappa=1.0)
        ])


def test_summarize_gradients_invariant():
    rng = np.random.default_rng(0)
    grads = (rng.standard_normal((3, 4)), rng.standard_normal(5))
    nuc, fro = summarize_gradients(grads)
    assert nuc >= fro >= 0.0
    # single vector: nuclear and frobenius coincide
    v = (rng.standard_normal(7),)
    nuc, fro = summarize_gradients(v)
    assert nuc == pytest.approx(fro)


# ---------------------------------------------------------------- rate fit

def test_rate_fit_planted_half_slope():
    runs = [make_records([t**-0.5] * t) for t in (100, 200, 400, 800)]
    assert rate_fit(runs) == pytest.approx(-0.5, abs=1e-12)


def test_rate_fit_constant_is_zero_slope():
    runs = [make_records([3.0] * t) for t in (100, 200, 400, 800)]
    assert rate_fit(runs) == pytest.approx(0.0, abs=1e-12)


def test_rate_fit_scale_invariant():
    runs = [make_records([7.0 * t**-0.5] * t) for t in (100, 200, 400, 800)]
    assert rate_fit(runs) == pytest.approx(-0.5, abs=1e-12)


def test_rate_fit_needs_four_horizons():
    runs = [make_records([1.0] * t) for t in (100, 200, 400)]
    with pytest.raises(InsufficientData):
        rate_fit(runs)
    with pytest.raises(InsufficientData):
        rate_fit([make_records([1.0] * t) for t in (100, 100, 200, 400)])


# ------------------------------------------------------------ kappa summary

def test_kappa_summary_medians_and_validation():
    records = {
        "adamw": make_records([1.0] * 10, kappa=100.0),
        "muon": make_records([1.0] * 10, kappa=1.0),
    }
    medians = kappa_summary(records)
    assert medians == {"adamw": 100.0, "muon": 1.0}
    assert ordering_holds(medians, ["adamw", "muon"], min_ratio=2.0)
    records["short"] = make_records([1.0] * 5, kappa=2.0)
    with pytest.raises(InvalidInput):
        kappa_summary(records)


def test_ordering_holds_requires_ratio():
    medians = {"a": 3.0, "b": 2.0, "c": 1.0}
    assert ordering_holds(medians, ["a", "b", "c"])
    assert not ordering_holds(medians, ["a", "b", "c"], min_ratio=2.0)
    assert not ordering_holds(medians, ["b", "a"])


# --------------------------------------------------------------- lemma audit

def test_lemma_audit_on_quadratic_run():
    problem = quadratic_problem(4, 3, seed=0)
    snaps = record_fismo_trajectory(problem, 150, eta=0.01, seed=100)
    report = lemma_audit(snaps, problem)
    by_id = {r.lemma_id: r for r in report.results}
    # checks implied by the actual proof chain all pass
    assert by_id["lemma1_descent_whitened"].passed
    assert by_id["pd_preconditioners"].passed
    assert by_id["kpq_bounds"].passed
    assert by_id["drift_ratio"].passed
    assert by_id["ema_tracking"].passed
    assert by_id["momentum_closed_form"].passed
    # the lemma's printed K_PQ form is not implied by the proof and is
    # expected to go negative on generic instances (see decisions notes)
    assert by_id["lemma1_descent"].worst_slack < by_id["lemma1_descent_whitened"].worst_slack


def test_lemma_audit_frozen_preconditioners():
    problem = quadratic_problem(3, 3, seed=1)
    snaps = record_fismo_trajectory(problem, 60, eta=0.01, seed=101, gamma=1.0)
    report = lemma_audit(snaps, problem)
    by_id = {r.lemma_id: r for r in report.results}
    assert by_id["pd_preconditioners"].passed
    assert by_id["kpq_bounds"].passed
    # identity preconditioners: K_PQ = 1 exactly, both descent forms coincide
    assert report.metadata["kpq_max_observed"] == pytest.approx(1.0, abs=1e-12)
    assert by_id["lemma1_descent"].worst_slack == pytest.approx(
        by_id["lemma1_descent_whitened"].worst_slack, abs=1e-12
    )
    assert by_id["lemma1_descent"].passed


def test_lemma_audit_negative_control():
    problem = quadratic_problem(3, 3, seed=2)
    snaps = record_fismo_trajectory(problem, 20, eta=0.01, seed=102)
    bad_p = snaps[10].p.copy()
    bad_p[0, 0] = -1.0
    tampered = list(snaps)
    tampered[10] = Snapshot(
        step=snaps[10].step, w_before=snaps[10].w_before, w_after=snaps[10].w_after,
        grad=snaps[10].grad, momentum=snaps[10].momentum, p=bad_p, q=snaps[10].q,
        eta=snaps[10].eta, beta=snaps[10].beta,
    )
    report = lemma_audit(tampered, problem)
    by_id = {r.lemma_id: r for r in report.results}
    assert not by_id["pd_preconditioners"].passed
    assert by_id["pd_preconditioners"].step_of_worst == 11


def test_lemma_audit_requires_consecutive_snapshots():
    problem = quadratic_problem(3, 3, seed=3)
    snaps = record_fismo_trajectory(problem, 10, eta=0.01, seed=103)
    with pytest.raises(InsufficientData):
        lemma_audit(snaps[:3] + snaps[5:], problem)
    with pytest.raises(InsufficientData):
        lemma_audit([], problem)


def test_lemma_audit_requires_smoothness():
    problem = quadratic_problem(3, 3, seed=4)
    snaps = record_fismo_trajectory(problem, 5, eta=0.01, seed=104)
    mlp = mlp_problem([3, 4, 4, 2], 16, seed=0)  # no declared L
    with pytest.raises(InvalidInput):
        lemma_audit(snaps, mlp)


def test_audit_report_json():
    problem = quadratic_problem(3, 3, seed=5)
    snaps = record_fismo_trajectory(problem, 10, eta=0.01, seed=105)
    report = lemma_audit(snaps, problem)
    payload = json.loads(report.to_json())
    assert {"metadata", "results"} <= set(payload)
    ids = {r["lemma_id"] for r in payload["results"]}
    assert "lemma1_descent" in ids and "kpq_bounds" in ids
    for r in payload["results"]:
        assert {"lemma_id", "pass", "worst_slack", "step_of_worst"} <= set(r)
