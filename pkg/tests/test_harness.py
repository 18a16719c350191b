import csv
import math

import pytest

from conftest import CONFIGS
from risswipt.harness import (
    AGG_COLUMNS,
    COLUMNS,
    ConfigError,
    SweepSpec,
    aggregate,
    apply_parameter,
    drop_seed,
    load_config,
    main,
    parse_config,
    read_csv,
    run_single,
    run_sweep,
)

TINY = """
M = 2
K = 2
N = 4
p_t_dbm = 40
sigma2_dbm = -40
gamma_min_db = 0
inner_cap = 3
ramp_inner_cap = 2
gamma_max = 10
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def test_reference_file_values():
    cfg, geo, opts = load_config(CONFIGS / "reference.cfg")
    assert cfg.sigma2 == pytest.approx(1e-4)
    assert cfg.delta2 == pytest.approx(1e-5)
    assert cfg.gamma_min == pytest.approx(10.0)
    assert cfg.p_min == pytest.approx(1e-5)
    assert (cfg.eta, cfg.xi, cfg.N) == (0.6, 0.005, 60)
    assert geo.rician_eps == pytest.approx(3.1623, abs=1e-4)
    assert cfg.P_T == pytest.approx(1e4)
    assert geo.ris_pos == (0.0, 5.0) and geo.c0_db == -30.0
    assert opts.inner_cap == 50


def test_zero_db_is_unity():
    cfg = parse_config(TINY).system
    assert cfg.gamma_min == pytest.approx(1.0)


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigError, match=r":3: unknown key 'foo'"):
        parse_config("M = 2\nK = 1\nfoo = 3\n")


def test_missing_key_and_bad_values():
    with pytest.raises(ConfigError, match="missing required"):
        parse_config("M = 2\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config(TINY + "eta = lots\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config(TINY + "just words\n")
    with pytest.raises(ConfigError):
        parse_config(TINY + "eta = 1.5\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(TINY + "M = 3\n")


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("n_ris", (40, 20), 1, 0)
    with pytest.raises(ValueError):
        SweepSpec("n_ris", (), 1, 0)
    with pytest.raises(ValueError):
        SweepSpec("speed", (1,), 1, 0)
    with pytest.raises(ValueError):
        SweepSpec("n_ris", (1,), 0, 0)


def test_apply_parameter():
    cfg = parse_config(TINY)
    assert apply_parameter(cfg, "n_ris", 7).system.N == 7
    assert apply_parameter(cfg, "k_users", 3).system.K == 3
    assert apply_parameter(cfg, "lambda_bar", 0.1).system.lambda_bar == 0.1
    assert apply_parameter(cfg, "f_min", 1.0).system.reflection.f_min == 1.0


def test_drop_seed_independent_of_value():
    assert drop_seed(1, "n_ris", 0) == drop_seed(1, "n_ris", 0)
    assert len({drop_seed(1, "n_ris", d) for d in range(50)}) == 50
    assert drop_seed(1, "n_ris", 0) != drop_seed(2, "n_ris", 0)
    assert drop_seed(1, "n_ris", 0) != drop_seed(1, "f_min", 0)


def test_run_single_rows(tiny_cfg):
    rows = run_single(load_config(tiny_cfg), 5)
    assert [r["method"] for r in rows] == ["full", "no_ris", "random_phase"]
    assert all(r["status"] in ("converged", "non_converged_c4", "infeasible") for r in rows)
    assert rows == run_single(load_config(tiny_cfg), 5)


def test_sweep_structure_round_trip_and_aggregates(tiny_cfg, tmp_path):
    out = tmp_path / "out"
    path = run_sweep(load_config(tiny_cfg), SweepSpec("n_ris", (2, 4, 6), 2, 11), out, workers=1)
    rows = read_csv(path)
    assert len(rows) == 3 * 2 * 3
    assert tuple(rows[0].keys()) == COLUMNS
    for r in rows:
        for col in ("sum_rate_bpshz", "rate_ph", "harvested_power_mw_total", "objective"):
            assert repr(float(r[col])) == r[col]
    typed = [{**r, "value": int(r["value"])} for r in rows]
    recomputed = {(a["value"], a["method"]): a for a in aggregate(typed)}
    for a in read_csv(out / "aggregate.csv"):
        ref = recomputed[(int(a["value"]), a["method"])]
        for col in AGG_COLUMNS[5:]:
            assert float(a[col]) == pytest.approx(ref[col], rel=1e-12, abs=1e-15)
    script = (out / "plot.gp").read_text()
    assert "Number of RIS elements N" in script and "aggregate.csv" in script


def test_aggregate_skips_infeasible_rows():
    rows = [
        {"param": "p", "value": 1, "method": "full", "status": "converged", "sum_rate_bpshz": 2.0, "rate_ph": 1.0,
         "harvested_power_mw_total": 1.0, "objective": 3.0},
        {"param": "p", "value": 1, "method": "full", "status": "infeasible", "sum_rate_bpshz": 100.0,
         "rate_ph": 1.0, "harvested_power_mw_total": 1.0, "objective": 3.0},
    ]
    (agg,) = aggregate(rows)
    assert agg["mean_sum_rate_bpshz"] == 2.0 and agg["infeasible"] == 1 and agg["rows"] == 2
    (empty,) = aggregate(rows[1:])
    assert math.isnan(empty["mean_objective"])


def test_cli_run_and_exit_codes(tiny_cfg, tmp_path, capsys):
    code = main(["run", "--config", str(tiny_cfg), "--seed", "3", "--out", str(tmp_path / "r")])
    assert code in (0, 2)
    with open(tmp_path / "r" / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert code == (0 if all(r["status"] == "converged" for r in rows) else 2)
    assert main(["baseline", "--mode", "no-ris", "--config", str(tiny_cfg), "--seed", "3",
                 "--out", str(tmp_path / "b")]) in (0, 2)
    assert len(read_csv(tmp_path / "b" / "results.csv")) == 1


def test_cli_usage_and_config_errors(tmp_path, capsys):
    assert main(["run"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("foo = 1\n")
    assert main(["run", "--config", str(bad), "--seed", "1", "--out", str(tmp_path)]) == 1
    assert "unknown key 'foo'" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--seed", "1", "--out", str(tmp_path)]) == 1


def test_cli_sweep(tiny_cfg, tmp_path):
    code = main(["sweep", "--config", str(tiny_cfg), "--param", "lambda_bar", "--values", "0.1,0.5",
                 "--drops", "1", "--seed", "2", "--out", str(tmp_path / "s"), "--workers", "1"])
    assert code in (0, 2)
    assert len(read_csv(tmp_path / "s" / "sweep.csv")) == 2 * 3


def test_unwritable_output(tiny_cfg, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        run_sweep(load_config(tiny_cfg), SweepSpec("n_ris", (2,), 1, 0), blocker / "sub", workers=1)
