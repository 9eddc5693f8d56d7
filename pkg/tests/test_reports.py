import math

import numpy as np
import pytest

from mfdp import mechlab, participation, reports
from mfdp.errors import ConfigurationError, ContractViolation


def test_table3_rows_columns():
    rows = reports.table3_rows()
    assert len(rows) == 6
    for r in rows:
        assert set(mechlab.LOSS_COLUMNS) <= set(r)
        assert set(reports.TABLE3_EXTRA_COLUMNS) <= set(r)
        assert r["gap"] <= 1e-9
        assert r["root_loss"] == pytest.approx(math.sqrt(r["loss"]))


def test_table1_small_instance():
    rows = reports.table1_rows(n=24, k=3, b=8, stamps=(1, 2, 3), mf_stamps=(2, 5))
    fams = {r["mechanism"] for r in rows}
    assert fams == set(reports.TABLE1_FAMILY_NAMES.values()) | {"mf_k1"}
    # Stamp count 5 does not divide 24 and is skipped.
    assert len(rows) == 4 * 3 + 1
    mechlab.write_loss_table(rows)
    with pytest.raises(ContractViolation):
        reports.table1_rows(n=24, k=3, b=8, families=("nope",))


def test_demo_config_validation():
    with pytest.raises(ConfigurationError):
        reports.DemoConfig(m=10, b=3)
    with pytest.raises(ConfigurationError):
        reports.DemoConfig(rho=0.0)
    with pytest.raises(ConfigurationError):
        reports.DemoConfig(mechanisms=("optimal", "magic"))


def test_schedule_respects_participation():
    cfg = reports.DemoConfig(m=32, k=3, b=4)
    sched = reports.batch_schedule(cfg)
    assert len(sched) == cfg.n
    reports.check_schedule(sched, cfg.k, cfg.b)
    with pytest.raises(ConfigurationError):
        reports.check_schedule([np.array([0]), np.array([0])], 2, 2)


def test_demo_noiseless_is_exact():
    cfg = reports.DemoConfig(m=32, d=3, k=2, b=4)
    out = reports.demo_train(cfg, noiseless=True)
    for name in cfg.mechanisms:
        np.testing.assert_allclose(out["mechanisms"][name]["trajectory"], out["exact"],
                                   atol=1e-12)
    np.testing.assert_allclose(out["exact"][-1], out["dataset_mean"], atol=1e-12)


def test_demo_deterministic():
    cfg = reports.DemoConfig(m=32, d=3, k=2, b=4)
    a = reports.demo_train(cfg, seed=5)["mechanisms"]["optimal"]["per_step_error"]
    b = reports.demo_train(cfg, seed=5)["mechanisms"]["optimal"]["per_step_error"]
    np.testing.assert_array_equal(a, b)


@pytest.mark.slow
def test_demo_ordering_is_significant():
    res = reports.demo_compare(reports.DemoConfig(), seeds=50)
    m = res["mean_final_mse"]
    assert m["optimal"] < m["honaker"] < m["independent"]
    assert res["ordering_significant"]


@pytest.mark.slow
def test_stamped_single_participation_row():
    schema = participation.make_schema(2000, 20, 100)
    row = reports.stamped_mf_row(2000, 2, schema, gap_tol=1e-4)
    assert row["loss"] == pytest.approx(1.37e6, rel=0.05)
