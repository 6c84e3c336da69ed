import csv
import json
import math

import numpy as np
import pytest

from oracles import bisect, dephasing_distance
from w4reset.harness import cli
from w4reset.harness.config import (
    ConfigError,
    ExperimentConfig,
    derive_seed,
    noise_to_json,
    parse_override,
)
from w4reset.harness.plots import emit_plot_data
from w4reset.harness.runner import (
    CalibrationError,
    ResultRow,
    ResultWriter,
    calibrate_noise,
    five_qubit_fidelity,
    initial_mixed_distance,
    load_rows,
    measured_reference,
    random_campaign,
    rows_to_csv,
    run_case,
)
from w4reset.noise import NoiseModel


def cfg_for(tmp_path, **doc):
    doc.setdefault("output_dir", str(tmp_path / "out"))
    return ExperimentConfig.from_dict(doc)


def test_presets_and_modes(tmp_path):
    assert cfg_for(tmp_path, case_id="case1a").mode == "sweep"
    assert cfg_for(tmp_path, case_id="case3_random").mode == "random"
    assert cfg_for(tmp_path, case_id="case2_qpt").mode == "qpt"
    assert cfg_for(tmp_path, case_id="custom").mode == "single"
    c = cfg_for(tmp_path, case_id="case1a")
    assert c.doc["sweep"]["phi_over_pi"] == [k / 16 for k in range(1, 9)]
    # an explicit campaign replaces the preset sweep
    c = cfg_for(tmp_path, case_id="case1a", n_random=3, protocol={"interaction": "random"})
    assert c.mode == "random"


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case_id": "nope"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case_id": "case1a", "extra": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case_id": "custom", "protocol": {"phi_over_pi": 2.5}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case_id": "case3_random", "sweep": {"phi_over_pi": [0.1]}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case_id": "custom", "sweep": {"phi_over_pi": [0.1]}, "n_random": 4})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        parse_override("noequals")


def test_overrides_and_noise(tmp_path):
    ov = parse_override('noise={"t_phi": "inf", "t1": 20}')
    c = ExperimentConfig.from_dict({"case_id": "custom"}, ov)
    m = c.noise_model()
    assert m.t1 == (20.0,) * 5 and all(math.isinf(v) for v in m.t_phi)
    back = ExperimentConfig.from_dict({"case_id": "custom", "noise": noise_to_json(m)}).noise_model()
    assert back == m
    assert parse_override("protocol.phi_over_pi=0.25") == {"protocol": {"phi_over_pi": 0.25}}


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, "case3_random", 1) == derive_seed(0, "case3_random", 1)
    seeds = {derive_seed(0, "case3_random", i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(1, "case3_random", 0) != derive_seed(0, "case3_random", 0)
    assert 0 <= derive_seed(7, "x", 3) < 2**63


def test_result_row_round_trip(tmp_path):
    row = ResultRow("case3_random", None, 4, "1", 0.123456789012345, 0.5, 0.5, 30, 12, 99)
    assert row.cells()[4] == "0.123456789012"
    w = ResultWriter(tmp_path / "r.csv")
    w.write(row)
    w.close()
    raw = (tmp_path / "r.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.decode("utf-8").splitlines()[0] == ",".join(ResultRow.columns())
    back = load_rows(tmp_path / "r.csv")[0]
    assert back.unitary_index == 4 and back.phi_over_pi is None
    assert back.p_success == pytest.approx(0.123456789012)
    with pytest.raises(ValueError):
        ResultRow("x", None, 0, "1", float("nan"), 0, 0, 0, 0, 0).cells()


def test_sweep_case1a(tmp_path):
    c = cfg_for(tmp_path, case_id="case1a")
    rows = run_case(c)
    assert len(rows) == 8
    for r in rows:
        assert r.p_success == pytest.approx(1.0, abs=1e-9)
        assert r.trace_distance < 1e-9
        assert r.depth_double == 12
    out = c.output_dir
    table = list(csv.reader((out / "plotdata" / "bloch_0.csv").open()))
    pts = {r[0]: np.array([float(x) for x in r[1:]]) for r in table[1:]}
    assert {"prep", "evolved", "reset", "no_reset_4"} <= set(pts)
    assert np.max(np.abs(pts["reset"] - pts["prep"])) < 1e-6
    assert (out / "plotdata" / "bloch_0.png").stat().st_size > 0
    summary = json.loads((out / "summary.json").read_text())
    ref = summary["measured_reference"]
    assert [r["phi_over_pi"] for r in ref] == [r.phi_over_pi for r in rows]


def test_measured_reference_table():
    counts = {c: len(measured_reference(c)) for c in ("case1a", "case1b", "case1c", "case3_random")}
    assert counts == {"case1a": 8, "case1b": 4, "case1c": 4, "case3_random": 0}
    assert all(0 <= r["p_success"] <= 1 for r in measured_reference("case1a"))


def test_random_campaign_resume_and_workers(tmp_path):
    base = {"case_id": "case3_random", "n_random": 6, "noise": {"t_phi": 2.0}}
    full = cfg_for(tmp_path / "a", **base)
    run_case(full)
    ref = (full.output_dir / "results.csv").read_bytes()

    part = cfg_for(tmp_path / "b", **base)
    run_case(part, stop_after=2)
    assert len(load_rows(part.output_dir / "results.csv")) == 2
    run_case(part, resume=True)
    assert (part.output_dir / "results.csv").read_bytes() == ref

    par = cfg_for(tmp_path / "c", workers=2, **base)
    run_case(par)
    assert (par.output_dir / "results.csv").read_bytes() == ref


def test_summary_config_echo_reproduces(tmp_path):
    c = cfg_for(tmp_path / "a", case_id="case3_random", n_random=4)
    run_case(c)
    summary = json.loads((c.output_dir / "summary.json").read_text())
    assert summary["seeds"] == [derive_seed(0, "case3_random", i) for i in range(4)]
    assert len(summary["cumulative_average"]) == 4
    echo = dict(summary["config"], output_dir=str(tmp_path / "b"))
    again = ExperimentConfig.from_dict(echo)
    run_case(again)
    assert (again.output_dir / "results.csv").read_bytes() == (c.output_dir / "results.csv").read_bytes()


def test_qpt_case_writes_chi_table(tmp_path):
    c = cfg_for(tmp_path, case_id="case2_qpt", tomography=None)
    rows = run_case(c)
    assert len(rows) == 6
    summary = json.loads((c.output_dir / "summary.json").read_text())
    assert summary["process_fidelity"] == pytest.approx(1.0, abs=1e-9)
    lines = (c.output_dir / "plotdata" / "chi.csv").read_text().splitlines()
    assert len(lines) == 1 + 16


def test_bar_table_has_one_entry_per_unitary(tmp_path):
    c = cfg_for(tmp_path, case_id="case3_random")
    rows = random_campaign(c)
    files = emit_plot_data(rows, "bar_per_unitary", tmp_path / "plots", figure=False)
    lines = files[0].read_text().splitlines()
    assert len(lines) == 1 + 100
    with pytest.raises(ValueError):
        emit_plot_data(rows, "pie", tmp_path)


def test_calibrate_initial_mixed_distance_against_root_oracle():
    # with relaxation switched off the idle distance is (1 - sqrt(1 - 1/T_phi)) / 2
    base = NoiseModel.uniform(t1=math.inf, t_phi=5.0)
    model, achieved = calibrate_noise("initial_mixed_D", 0.098, base)
    expect = bisect(lambda t: dephasing_distance(t, math.inf) - 0.098, 0.1, 1000.0)
    assert model.t_phi[0] == pytest.approx(expect, abs=1e-4)
    assert model.t_phi[0] == pytest.approx(2.828, abs=1e-3)
    assert achieved == pytest.approx(0.098, abs=1e-6)
    # default T1 shifts the solution, still matched by the oracle
    model, _ = calibrate_noise("initial_mixed_D", 0.098)
    expect = bisect(lambda t: dephasing_distance(t, 30.0) - 0.098, 0.1, 1000.0)
    assert model.t_phi[0] == pytest.approx(expect, abs=1e-4)
    assert initial_mixed_distance(model) == pytest.approx(0.098, abs=1e-6)


def test_calibrate_five_qubit_fidelity():
    model, achieved = calibrate_noise("five_qubit_fidelity", 0.386)
    assert abs(achieved - 0.386) <= 0.01
    assert model.t1 == NoiseModel().t1
    assert five_qubit_fidelity(model) == pytest.approx(achieved)


def test_calibrate_trivial_and_unreachable():
    model, achieved = calibrate_noise("five_qubit_fidelity", 1.0, NoiseModel.noiseless())
    assert achieved == pytest.approx(1.0)
    with pytest.raises(CalibrationError):
        calibrate_noise("five_qubit_fidelity", 0.999)
    with pytest.raises(ValueError):
        calibrate_noise("nonsense", 0.5)


def test_rows_to_csv_matches_writer(tmp_path):
    c = cfg_for(tmp_path, case_id="case3_random", n_random=3)
    rows = run_case(c)
    assert rows_to_csv(rows) == (c.output_dir / "results.csv").read_text()


def test_cli_exit_codes_and_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["sweep", "--case", "case1b"]) == 0
    assert (tmp_path / "envout" / "results.csv").exists()
    bad = tmp_path / "bad.json"
    bad.write_text('{"case_id": "case1a", "protocol": {"axis": "w"}}')
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(tmp_path / "absent.json")]) == 2
    assert cli.main(["calibrate", "--value", "5"]) == 3
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"case_id": "case3_random", "n_random": 3}))
    out = tmp_path / "cli"
    assert cli.main(["run", str(good), "-o", str(out), "--set", "master_seed=5"]) == 0
    assert load_rows(out / "results.csv")[0].seed == derive_seed(5, "case3_random", 0)
    assert cli.main(["emit-plots", str(out), "--no-figures"]) == 0
    assert (out / "plotdata" / "cumulative_average.csv").exists()
    assert cli.main(["schema"]) == 0
    assert '"case_id"' in capsys.readouterr().out


def test_calibrated_config_echoes_solved_model(tmp_path):
    doc = {
        "case_id": "case3_random",
        "n_random": 2,
        "noise": {"calibrate": {"target": "initial_mixed_D", "value": 0.098}},
    }
    c = cfg_for(tmp_path, **doc)
    run_case(c)
    summary = json.loads((c.output_dir / "summary.json").read_text())
    t_phi = summary["calibration"]["t_phi"]
    assert summary["calibration"]["achieved"] == pytest.approx(0.098, abs=1e-6)
    assert "calibrate" not in summary["config"]["noise"]
    assert summary["config"]["noise"]["t_phi"] == [t_phi] * 5
