import json
import math

import numpy as np
import pytest
from conftest import make_triples
from oracles import log_e_ref

from eselection.demo import synthetic_triples
from eselection.errors import ConfigError, DegenerateScaleError, ESelectionError, IngestError
from eselection.harness import (
    DEFAULT_LAM_GRID,
    DEFAULT_WINDOW_GRID,
    RECORD_COLUMNS,
    Reports,
    RunConfig,
    emit_reports,
    ingest,
    oracle_benchmark,
    parse_duration,
    parse_lam_grid,
    run_selection,
    run_sweep,
    write_triples,
)
from eselection.scores import ForecastTriple
from eselection.transform import bound, calibrate_scale

SMALL = dict(calibration_length=96, lag=8)


def small_config(**kw):
    base = dict(SMALL, lam=0.2, window=24, strategy="persistence")
    base.update(kw)
    return RunConfig(**base)


# ---------------------------------------------------------------- parsing

@pytest.mark.parametrize("text,steps", [("1h", 4), ("2h", 8), ("1d", 96), ("7d", 672), ("14d", 1344), ("37", 37), (5, 5)])
def test_duration_parsing(text, steps):
    assert parse_duration(text) == steps


@pytest.mark.parametrize("text", ["0.3h", "1w", "", "-4", "0"])
def test_duration_errors(text):
    with pytest.raises(ConfigError):
        parse_duration(text)


def test_default_grids():
    assert len(DEFAULT_LAM_GRID) == 99 and DEFAULT_LAM_GRID[0] == 0.01 and DEFAULT_LAM_GRID[-1] == 0.99
    assert DEFAULT_WINDOW_GRID == (4, 8) + tuple(range(96, 1345, 96))
    assert parse_lam_grid("0.01:0.99:0.01") == list(DEFAULT_LAM_GRID)
    assert parse_lam_grid("0.1, 0.5") == [0.1, 0.5]


@pytest.mark.parametrize("kw", [dict(alpha=1.0), dict(lam=1.0), dict(lam=0.0), dict(lag=-1),
                                dict(strategy="greedy"), dict(initial_arm="R"), dict(window="0")])
def test_config_rejects_invalid(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_config_mapping_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"lamda": 0.1})


def test_config_window_durations():
    assert RunConfig(window="1h,7d").window == [4, 672]


# ---------------------------------------------------------------- ingestion

def write(tmp_path, text, name="in.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


GOOD = "t,p_1,p_2,q_1,q_2,y_1,y_2\n1,1,2,3,4,10,11\n2,1,2,3,4,11,12\n3,1,2,3,4,12,13\n"


def test_ingest_well_formed(tmp_path):
    triples = ingest(write(tmp_path, GOOD))
    assert len(triples) == 3 and triples[0].horizon == 2
    np.testing.assert_array_equal(triples[2].y, [12.0, 13.0])


def test_ingest_semicolon_delimiter(tmp_path):
    assert len(ingest(write(tmp_path, GOOD.replace(",", ";")))) == 3


@pytest.mark.parametrize("bad_row,line,message", [
    ("3,1,2,3,4,12", 4, "expected 7 cells"),
    ("3,1,x,3,4,12,13", 4, "non-numeric"),
    ("2,1,2,3,4,12,13", 4, "duplicate or out of order"),
    ("3.5,1,2,3,4,12,13", 4, "not an integer"),
    ("3,1,2,3,4,99,13", 4, "shifted"),
])
def test_ingest_errors_name_the_row(tmp_path, bad_row, line, message):
    text = "\n".join(GOOD.splitlines()[:3] + [bad_row]) + "\n"
    with pytest.raises(IngestError) as err:
        ingest(write(tmp_path, text))
    assert err.value.line == line and message in str(err.value)
    assert f"line {line}" in str(err.value)


def test_ingest_bad_header(tmp_path):
    with pytest.raises(IngestError):
        ingest(write(tmp_path, "t,p_1,q_1\n1,2,3\n"))


def test_ingest_drops_trailing_incomplete_rows(tmp_path):
    text = GOOD + "4,1,2,3,4,13,\n5,1,2,3,4,,\n"
    assert len(ingest(write(tmp_path, text))) == 3


def test_ingest_rejects_complete_row_after_incomplete(tmp_path):
    text = "t,p_1,q_1,y_1\n1,1,2,3\n2,1,2,nan\n3,1,2,3\n"
    with pytest.raises(IngestError) as err:
        ingest(write(tmp_path, text))
    assert err.value.line == 4


def test_write_and_ingest_round_trip(tmp_path, demo_triples):
    path = tmp_path / "demo.csv"
    write_triples(path, demo_triples[:50])
    back = ingest(path)
    for a, b in zip(demo_triples[:50], back):
        assert a.t == b.t
        np.testing.assert_array_equal(a.p, b.p)
        np.testing.assert_array_equal(a.y, b.y)


# ---------------------------------------------------------------- benchmark

def test_oracle_benchmark_alternating_winners():
    bench = oracle_benchmark(make_triples([(1, 2), (2, 1)]), calibration_length=0)
    assert (bench["oracle"], bench["baseline_p"], bench["baseline_q"]) == (1.0, 1.5, 1.5)


def test_oracle_benchmark_identical_forecasts():
    bench = oracle_benchmark(make_triples([(3, 3), (1, 1)]), calibration_length=0)
    assert bench["oracle"] == bench["baseline_p"] == bench["baseline_q"] == 2.0


def test_oracle_benchmark_skips_calibration():
    bench = oracle_benchmark(make_triples([(100, 0), (1, 2), (2, 1)]), calibration_length=1)
    assert bench["n_steps"] == 2 and bench["baseline_p"] == 1.5


# ---------------------------------------------------------------- runs

def test_too_short_series_is_a_config_error(demo_triples):
    with pytest.raises(ConfigError):
        run_selection(small_config(window=2000), demo_triples)


def test_identical_forecasts_give_neutral_run():
    rng = np.random.default_rng(0)
    triples = []
    for t in range(1, 301):
        y = rng.normal(size=3)
        f = y + rng.normal(size=3)
        triples.append(ForecastTriple(t, f, f.copy(), y))
    res = run_selection(small_config(), triples)
    rec = res.records
    assert np.all(rec["delta_hat"] == 0) and np.all(rec["delta_tilde"] == 0)
    valid = ~np.isnan(rec["log_e"])
    assert np.all(rec["log_e"][valid] == 0) and np.all(rec["log_e_star"][valid] == 0)
    s = res.summary
    assert s["average_score"] == pytest.approx(s["baseline_p"]) and s["baseline_p"] == s["baseline_q"]


def test_constant_calibration_with_later_differences_is_data_error(demo_triples):
    head = [ForecastTriple(t, np.ones(2), np.ones(2), np.zeros(2)) for t in range(1, 97)]
    tail = [ForecastTriple(t + 96, tr.p, tr.q, tr.y) for t, tr in enumerate(demo_triples[:200], start=1)]
    triples = head + [ForecastTriple(tr.t, tr.p[:2], tr.q[:2], tr.y[:2]) for tr in tail]
    with pytest.raises(DegenerateScaleError):
        run_selection(small_config(), triples)


@pytest.mark.parametrize("scope", ["series", "selection"])
def test_ten_step_stream_matches_oracle(scope):
    pairs = [(1.0, 2.0), (3.0, 1.0), (2.0, 2.5), (4.0, 1.0), (1.0, 1.5),
             (0.5, 2.0), (2.0, 1.0), (3.0, 3.5), (1.0, 0.0), (2.0, 4.0)]
    triples = make_triples(pairs)
    cfg = RunConfig(lam=0.5, window=3, strategy="wavg", calibration_length=3, lag=1, evidence_scope=scope)
    res = run_selection(cfg, triples)
    dh = np.array([a - b for a, b in pairs])
    spec = calibrate_scale(dh, 3)
    dt = [bound(x, spec) for x in dh]
    rec = res.records
    np.testing.assert_array_equal(rec["t"], np.arange(4, 11))
    for i, row in enumerate(range(3, 10)):
        if scope == "series":
            expected = log_e_ref(dt[max(0, row - 2):row + 1], 0.5)
        elif i < 2:
            assert math.isnan(rec["log_e"][i])
            continue
        else:
            expected = log_e_ref(dt[row - 2:row + 1], 0.5)
        assert abs(rec["log_e"][i] - expected) <= 1e-12


def test_series_scope_truncates_windows_at_the_start():
    pairs = [(1.0, 2.0), (3.0, 1.0), (2.0, 2.5), (4.0, 1.0), (1.0, 1.5), (0.5, 2.0), (2.0, 1.0), (3.0, 3.5)]
    cfg = RunConfig(lam=0.5, window=5, strategy="wavg", calibration_length=2, lag=0)
    rec = run_selection(cfg, make_triples(pairs)).records
    dh = np.array([a - b for a, b in pairs])
    dt = [bound(x, calibrate_scale(dh, 2)) for x in dh]
    for i, row in enumerate(range(2, 8)):
        lo = max(0, row - 4)
        assert abs(rec["log_e"][i] - log_e_ref(dt[lo:row + 1], 0.5)) <= 1e-12
        assert rec["rolling_mean"][i] == pytest.approx(np.mean(dt[lo:row + 1]), abs=1e-15)


def test_no_record_for_calibration_steps(demo_triples):
    res = run_selection(small_config(), demo_triples)
    assert res.records["t"].min() == demo_triples[96].t
    assert len(res.records["t"]) == len(demo_triples) - 96


def test_records_have_every_column(demo_triples):
    res = run_selection(small_config(), demo_triples)
    assert set(RECORD_COLUMNS) <= set(res.records)
    lengths = {len(res.records[c]) for c in RECORD_COLUMNS}
    assert lengths == {len(demo_triples) - 96}


@pytest.mark.parametrize("strategy", ["persistence", "sampling"])
def test_selection_strategies_never_beat_the_oracle(demo_triples, strategy):
    for lam in (0.05, 0.3, 0.8):
        for window in (4, 24, 96):
            s = run_selection(small_config(lam=lam, window=window, strategy=strategy), demo_triples).summary
            assert s["average_score"] >= s["oracle"] - 1e-9


def test_blending_can_beat_the_selection_oracle():
    """Averaging two forecasts with opposite errors beats picking either one."""
    triples = []
    for t in range(1, 301):
        y = np.zeros(4)
        sign = 1.0 if t % 2 else -1.0
        triples.append(ForecastTriple(t, y + sign * (1.0 + 0.1 * (t % 3)), y - sign, y))
    s = run_selection(small_config(strategy="wavg", lam=0.01), triples).summary
    assert s["average_score"] < s["oracle"]


@pytest.mark.parametrize("scope,n_warm", [("series", 8), ("selection", 24 - 1 + 8)])
def test_warmup_uses_initial_arm(demo_triples, scope, n_warm):
    res = run_selection(small_config(initial_arm="Q", strategy="wavg", evidence_scope=scope), demo_triples)
    warm = res.records["source"] == "WARMUP"
    assert warm.sum() == n_warm and np.all(warm[:n_warm])
    assert np.all(res.records["w_q"][warm] == 1.0)
    assert np.all(res.records["basis_step"] == res.records["t"] - 8)


def test_sampling_is_reproducible_and_seeded(demo_triples):
    a = run_selection(small_config(strategy="sampling", lam=0.02, seed=1), demo_triples).records["source"]
    b = run_selection(small_config(strategy="sampling", lam=0.02, seed=1), demo_triples).records["source"]
    c = run_selection(small_config(strategy="sampling", lam=0.02, seed=2), demo_triples).records["source"]
    np.testing.assert_array_equal(a, b)
    assert np.any(a != c)


# ---------------------------------------------------------------- sweeps

def test_single_cell_sweep_matches_run(demo_triples):
    cfg = small_config(strategy="wavg")
    sweep = run_sweep(cfg, demo_triples)
    run = run_selection(cfg, demo_triples)
    assert len(sweep.rows) == 1
    row = {k: v for k, v in sweep.rows[0].items() if k != "runtime_s"}
    assert row == {k: v for k, v in run.summary.items() if k != "sigma"}


def test_sweep_deduplicates_grid(demo_triples):
    cfg = small_config(lam=[0.1, 0.1, 0.2], window=["1d", 96, 24], strategy="wavg,wavg,persistence")
    assert len(run_sweep(cfg, demo_triples).rows) == 2 * 2 * 2


def test_sweep_parallel_matches_serial(demo_triples):
    cfg = small_config(lam=[0.05, 0.5], window=[4, 24, 96], strategy="persistence,sampling,wavg")
    strip = lambda rows: [{k: v for k, v in r.items() if k != "runtime_s"} for r in rows]  # noqa: E731
    assert strip(run_sweep(cfg, demo_triples, jobs=1).rows) == strip(run_sweep(cfg, demo_triples, jobs=3).rows)


def test_short_windows_are_excluded(demo_triples):
    sweep = run_sweep(small_config(lam=[0.1, 0.5], window=[4, 96], strategy="persistence"), demo_triples)
    excluded = {(r["window"], r["excluded"]) for r in sweep.rows}
    assert (4, True) in excluded
    heat = sweep.heatmap("persistence")
    assert heat.shape == (2, 2) and np.all(np.isnan(heat[0]))


# ---------------------------------------------------------------- reports

def test_empty_reports_write_metadata_only(tmp_path):
    paths = emit_reports(Reports(), tmp_path / "out")
    assert [p.name for p in paths] == ["metadata.json"]
    meta = json.loads(paths[0].read_text())
    assert meta["files"] == [] and "numpy" in meta["versions"]


def test_reports_are_byte_identical(tmp_path, demo_triples):
    cfg = small_config(strategy="sampling", lam=0.05)
    sweep_cfg = small_config(lam=[0.05, 0.5], window=[4, 24], strategy="sampling,wavg")
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        emit_reports(Reports(config=cfg, run=run_selection(cfg, demo_triples),
                             sweep=run_sweep(sweep_cfg, demo_triples),
                             benchmark=oracle_benchmark(demo_triples, 96)), out)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "runtime.csv"})
    assert outputs[0] == outputs[1]
    assert {"steps.csv", "summary.json", "sweep.csv", "metadata.json", "benchmark.json",
            "heatmap_sampling.csv", "heatmap_wavg.csv"} <= set(outputs[0])


def test_steps_csv_has_watts_bands(tmp_path, demo_triples):
    run = run_selection(small_config(), demo_triples)
    emit_reports(Reports(run=run), tmp_path)
    header = (tmp_path / "steps.csv").read_text().splitlines()[0].split(",")
    assert "lower_watts" in header and "upper_watts" in header


def test_report_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ESelectionError) as err:
        emit_reports(Reports(), blocker / "sub")
    assert str(blocker) in str(err.value)


def test_demo_data_favours_each_model_in_turn():
    triples = synthetic_triples(n=1000, horizon=4, seed=0, switch=0.5)
    bench = oracle_benchmark(triples[:500], 0)
    later = oracle_benchmark(triples[500:], 0)
    assert bench["baseline_p"] < bench["baseline_q"] and later["baseline_q"] < later["baseline_p"]
