import numpy as np
import pytest

from lsmselect.core import Hyperparams
from lsmselect.exceptions import InsufficientNetworks
from lsmselect.harness import (
    JOBS_ENV,
    PilotConfig,
    StudyConfig,
    default_jobs,
    fit_with_restarts,
    run_methods,
    run_pilot,
    run_study,
    screening_rule,
)
from lsmselect.simulate import SimConfig, generate

QUICK = Hyperparams(max_iters=60, stop_patience=20, delta_grid=(0.0, 0.5))


def test_screening_rule_examples():
    # dropped 7/10 -> excluded; 6/10 -> kept; 10/10 but rare -> kept
    mask = screening_rule([7, 6, 10, 0], [0.3, 0.3, 0.05, 0.5], 10)
    np.testing.assert_array_equal(mask, [True, False, False, False])
    np.testing.assert_array_equal(screening_rule([3], [0.2], 3, drop_fraction=1.0), [True])
    np.testing.assert_array_equal(screening_rule([2], [0.1], 3, drop_fraction=0.6), [True])


def test_default_jobs(monkeypatch):
    monkeypatch.delenv(JOBS_ENV, raising=False)
    assert default_jobs() == 1
    monkeypatch.setenv(JOBS_ENV, "3")
    assert default_jobs() == 3
    for bad in ("0", "two"):
        monkeypatch.setenv(JOBS_ENV, bad)
        with pytest.raises(ValueError):
            default_jobs()


def test_restarts_keep_the_best_fit():
    net, cov, _ = generate(SimConfig(n=30, q=3, seed=1))
    one = fit_with_restarts(net, cov, QUICK, restarts=1)
    three = fit_with_restarts(net, cov, QUICK, restarts=3)
    assert three.best_loss.per_param <= one.best_loss.per_param


def test_run_methods_reports_every_method():
    net, cov, truth = generate(SimConfig(n=40, q=5, n_noise=2, seed=3))
    out = run_methods(net, cov, QUICK, truth=truth.active_true)
    assert set(out) == {"network_only", "joint", "lasso", "melasso"}
    assert out["joint"].active is None
    for name in ("lasso", "melasso"):
        oc = out[name]
        assert oc.report.tn_rate is not None and oc.report.tp_rate is not None
        assert oc.selection.state.q == len(oc.active)
    # both screeners share stage one and lambda, so they keep the same columns
    assert out["lasso"].active == out["melasso"].active
    assert out["lasso"].selection.chosen_delta == 0.0
    with pytest.raises(ValueError):
        run_methods(net, cov, QUICK, methods=("bogus",))


def test_run_study_is_reproducible():
    cfg = StudyConfig(regime="sparse", noise_levels=(0, 2), replicates=2, master_seed=4,
                      methods=("joint", "lasso"), sim=SimConfig(n=30, q=4), hyper=QUICK)
    a = run_study(cfg)
    b = run_study(cfg)
    assert a.rows == b.rows and not a.failures
    assert len(a.rows) == 2 * 2 * 2
    t1 = a.table1()
    assert {(r["n_noise"], r["method"]) for r in t1} == {(0, "joint"), (0, "lasso"),
                                                        (2, "joint"), (2, "lasso")}
    assert all(r["replicates"] == 2 for r in t1)
    t2 = a.table2()
    assert all(r["method"] == "lasso" for r in t2)
    assert next(r for r in t2 if r["n_noise"] == 0)["tn_rate_mean"] is None
    assert 0 <= a.mean("tp_rate", "lasso", 2) <= 1


def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(replicates=0)
    with pytest.raises(ValueError):
        StudyConfig(regime="dense")


def _pilot_data(count, n=30):
    out = []
    for i in range(count):
        net, cov, _ = generate(SimConfig(n=n, q=4, n_noise=2, seed=100 + i))
        out.append((f"net{i}", net, cov))
    return out


def test_run_pilot_small():
    data = _pilot_data(4)
    cfg = PilotConfig(pilot_count=3, seed=2)
    rep = run_pilot(data, cfg, QUICK)
    assert len(rep.pilot_ids) == 3 and len(set(rep.pilot_ids)) == 3
    assert rep.drop_counts.shape == (4,) and np.all(rep.drop_counts <= 3)
    expect = screening_rule(rep.drop_counts, rep.min_prevalence, 3)
    np.testing.assert_array_equal(rep.excluded, expect)
    assert rep.reduction_percent == pytest.approx(100 * expect.mean())
    assert {r["id"] for r in rep.full_phase} == set(d[0] for d in data) - set(rep.pilot_ids)
    again = run_pilot(data, cfg, QUICK, full_phase=False)
    np.testing.assert_array_equal(again.drop_counts, rep.drop_counts)


def test_run_pilot_needs_enough_networks():
    with pytest.raises(InsufficientNetworks):
        run_pilot(_pilot_data(2), PilotConfig(pilot_count=3), QUICK)


def test_rare_exemption_overrides_frequent_drops():
    # dropped by 8 of 10 pilots but prevalence 0.05 somewhere: still collected
    assert not screening_rule([8], [0.05], 10)[0]
    assert screening_rule([8], [0.2], 10)[0]
