import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketmoments.errors import CSVFormatError, InputError
from marketmoments.trade_data import (RiskVector, SynthSpec, TickRecord, TickSeries,
                                      generate_synthetic, parse_risk_csv, parse_tick_csv,
                                      repair_gaps, to_dense, validate_series, write_risk_csv,
                                      write_tick_csv)


def test_tick_record_derives_value():
    assert TickRecord(0, "A", 2.0, 1.5).value == 3.0


def test_single_consistent_tick_is_valid():
    s = TickSeries.from_records([TickRecord(0, "A", 2.0, 1.0, 2.0)])
    assert validate_series(s).ok


def test_value_mismatch_reported():
    s = TickSeries.from_records([TickRecord(0, "A", 2.0, 1.0, 5.0)])
    assert validate_series(s).kinds() == {"value mismatch"}


def test_duplicate_reported():
    s = TickSeries.from_arrays([0, 0], ["A", "A"], [2.0, 2.0], [1.0, 1.0])
    assert "duplicate" in validate_series(s).kinds()


def test_missing_step_and_signs_reported():
    s = TickSeries.from_arrays([0, 2], ["A", "A"], [2.0, -1.0], [1.0, 0.0])
    kinds = validate_series(s).kinds()
    assert {"missing step", "non-positive price", "non-positive volume"} <= kinds


def test_value_tolerance_is_relative():
    ok = TickSeries(step=[0], company=["A"], price=[1e6], volume=[3.0], value=[3e6 * (1 + 5e-10)])
    bad = TickSeries(step=[0], company=["A"], price=[1e6], volume=[3.0], value=[3e6 * (1 + 5e-9)])
    assert validate_series(ok).ok
    assert not validate_series(bad).ok


def test_dense_rejects_invalid():
    s = TickSeries.from_arrays([0, 2], ["A", "A"], [2.0, 2.0], [1.0, 1.0])
    with pytest.raises(InputError, match="missing step"):
        to_dense(s)


def test_repair_gaps_forward_fills():
    s = TickSeries.from_arrays([0, 3, 1], ["A", "A", "B"], [2.0, 5.0, 7.0], [1.0, 1.0, 1.0])
    r = repair_gaps(s)
    assert validate_series(r).ok
    d = to_dense(r)
    assert d.price[0].tolist() == [2.0, 2.0, 2.0, 5.0]
    assert d.volume[0].tolist() == [1.0, 0.0, 0.0, 1.0]
    # leading gap takes the first traded price
    assert d.price[1].tolist() == [7.0, 7.0, 7.0, 7.0]


def test_synthetic_degenerate_distributions():
    spec = SynthSpec(n_companies=1, n_steps=3, price0=2.0, volatility=0.0, volume_mean=1.0,
                     volume_sigma=0.0)
    s, risks = generate_synthetic(spec, 0)
    assert s.step.tolist() == [0, 1, 2]
    assert s.value.tolist() == [2.0, 2.0, 2.0]
    assert set(risks) == set(s.companies)


def test_synthetic_deterministic():
    spec = SynthSpec(n_companies=3, n_steps=50, n_risks=2)
    a = generate_synthetic(spec, 11)
    b = generate_synthetic(spec, 11)
    assert write_tick_csv(a[0]) == write_tick_csv(b[0])
    assert write_risk_csv(a[1]) == write_risk_csv(b[1])
    assert write_tick_csv(generate_synthetic(spec, 12)[0]) != write_tick_csv(a[0])


def test_synthetic_large_sample_mean_volume():
    spec = SynthSpec(n_companies=50, n_steps=10_000, volume_mean=250.0, volume_sigma=0.8)
    s, risks = generate_synthetic(spec, 3)
    assert validate_series(s).ok
    assert len(s) == 50 * 10_000
    assert abs(s.volume.mean() / 250.0 - 1) < 0.05
    coords = np.stack([rv.coords for rv in risks.values()])
    assert coords.min() >= 0 and coords.max() <= 1


@pytest.mark.parametrize("field, value, msg", [
    ("n_steps", 0, "steps must be positive"),
    ("n_companies", 0, "companies must be positive"),
    ("volatility", -1.0, "non-negative"),
    ("volume_mean", 0.0, "volume mean"),
])
def test_synthetic_rejects_bad_spec(field, value, msg):
    with pytest.raises(InputError, match=msg):
        generate_synthetic(SynthSpec(**{field: value}), 0)


def test_parse_schema_example():
    s = parse_tick_csv(b"step,company,price,volume\n0,ACME,2.0,1.0\n")
    assert len(s) == 1 and s.value[0] == 2.0 and s.company[0] == "ACME"


def test_parse_negative_volume_names_row():
    with pytest.raises(CSVFormatError, match="row 2"):
        parse_tick_csv(b"step,company,price,volume\n0,ACME,2.0,-1\n")


@pytest.mark.parametrize("text", [
    b"step,company,price\n0,A,1\n",
    b"step,company,price,volume\n0,A,abc,1\n",
    b"step,company,price,volume\n-1,A,1,1\n",
    b"step,company,price,volume\n1.5,A,1,1\n",
])
def test_parse_rejects_malformed(text):
    with pytest.raises(InputError):
        parse_tick_csv(text)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(1e-6, 1e9), st.floats(1e-6, 1e9)), min_size=1, max_size=30),
       st.integers(1, 4))
def test_tick_csv_round_trip(pv, q):
    n = len(pv)
    steps = [i // q for i in range(n)]
    names = [f"Q{i % q}" for i in range(n)]
    s = TickSeries.from_arrays(steps, names, [p for p, _ in pv], [u for _, u in pv])
    assert parse_tick_csv(write_tick_csv(s)) == s


def test_risk_csv_round_trip():
    risks = {"A": RiskVector("A", [[0.1, 1.0], [0.0, 0.5]]), "B": RiskVector("B", [[0.3], [0.7]])}
    back = parse_risk_csv(write_risk_csv(risks))
    assert set(back) == {"A", "B"}
    assert np.array_equal(back["A"].coords, risks["A"].coords)


def test_risk_vector_domain():
    with pytest.raises(InputError):
        RiskVector("A", [[1.2]])
    with pytest.raises(CSVFormatError, match="row 2"):
        parse_risk_csv(b"company,m,j,coord\nA,1,1,1.5\n")
