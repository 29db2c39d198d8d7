import json
import math

import numpy as np
import pytest

from elacu.cli import main
from elacu.driver import PulseEnvelope, hill_profile
from elacu.io_formats import read_csv
from elacu.norms import convergence_rates

PI = math.pi


def _write_config(tmp_path, name="config.json", **sections):
    base = {
        "geometry": {"option": 2, "level": 0},
        "discretization": {"p": 1},
        "model": "linear",
        "time": {"T": 0.5, "dt": 0.05},
    }
    for key, val in sections.items():
        if isinstance(val, dict):
            base.setdefault(key, {}).update(val)
        else:
            base[key] = val
    path = tmp_path / name
    path.write_text(json.dumps(base))
    return path


def test_run_exit_zero_and_csv(tmp_path):
    cfg = _write_config(tmp_path)
    code = main(["--output-dir", str(tmp_path), "--quiet", "run", "--config", str(cfg)])
    assert code == 0
    rows = read_csv(tmp_path / "errors.csv")
    assert len(rows) == 1
    assert rows[0].level == 0
    assert np.isfinite(rows[0].err_rel)


def test_zero_data_run_reports_relative_error_one(tmp_path):
    cfg = _write_config(
        tmp_path,
        experiment={"initial": "zero", "forcing": "none", "dirichlet": "zero"},
    )
    code = main(["--output-dir", str(tmp_path), "--quiet", "run", "--config", str(cfg)])
    assert code == 0
    rows = read_csv(tmp_path / "errors.csv")
    assert rows[0].err_rel == pytest.approx(1.0, rel=1e-10)


def test_invalid_beta_exits_two(tmp_path):
    cfg = _write_config(tmp_path, discretization={"p": 1, "beta": -1.0})
    code = main(["--quiet", "run", "--config", str(cfg)])
    assert code == 2


def test_missing_config_exits_two(tmp_path):
    code = main(["--quiet", "run", "--config", str(tmp_path / "nope.json")])
    assert code == 2


def test_numerical_failure_exits_three(tmp_path):
    # explicit elastic step far past its stability limit
    cfg = _write_config(tmp_path, time={"T": 40.0, "dt": 2.0},
                        discretization={"p": 2})
    code = main(["--quiet", "run", "--config", str(cfg)])
    assert code == 3


def test_converge_self_consistent_and_deterministic(tmp_path, capsys):
    cfg = _write_config(tmp_path, time={"T": 0.4, "dt": 0.02})
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    for out in (out1, out2):
        code = main(["--output-dir", str(out), "--quiet",
                     "converge", "--config", str(cfg), "--levels", "2"])
        assert code == 0
    text1 = (out1 / "convergence.csv").read_text()
    text2 = (out2 / "convergence.csv").read_text()
    assert text1 == text2  # identical configs give identical tables

    rows = read_csv(out1 / "convergence.csv")
    rates = convergence_rates([r.err_rel for r in rows], [r.h_max for r in rows])
    # agreement at the 12-significant-digit precision of the stored table
    assert rows[-1].rate == pytest.approx(rates[-1], rel=1e-9)
    printed = capsys.readouterr().out
    assert f"{rates[-1]:.6g}" in printed


def test_pulse_envelope_shape():
    f, a = 100.0, 2.0
    pulse = PulseEnvelope(f, a)
    assert pulse.value(0.0) == 0.0
    # envelope reaches exactly 1 at t = 2/f
    env, _, _ = pulse._envelope(2.0 / f)
    assert env == pytest.approx(1.0)
    assert pulse.value(2.0 / f) == pytest.approx(a * math.sin(2 * PI * f * 2.0 / f), abs=1e-12)
    assert pulse.value(4.0 / f + 1e-9) == 0.0
    # derivative consistency (finite differences)
    for t in (0.004, 0.013, 0.027):
        val, vel, acc = pulse.derivatives(t)
        h = 1e-7
        fd_vel = (pulse.value(t + h) - pulse.value(t - h)) / (2 * h)
        assert vel == pytest.approx(fd_vel, rel=1e-5, abs=1e-4)


def test_hill_profile():
    r = 0.5
    xy = np.array([[0.0, 0.0], [r, 0.0], [0.6, 0.0], [0.3, 0.0]])
    vals = hill_profile(xy, r)
    assert vals[0] == 1.0
    assert vals[1] == 0.0
    assert vals[2] == 0.0
    assert 0 < vals[3] < 1


def _demo_config(tmp_path, model, amplitude, t_final=8e-3, name="demo.json"):
    data = {
        "geometry": {"option": 2, "level": 0},
        "discretization": {"p": 2},
        "materials": {"set": "physical"},
        "model": model,
        "time": {"T": t_final, "dt": 2e-5},
        "demo": {"frequency": 1500.0, "amplitude": amplitude},
        "outputs": {"probe": [0.0, 0.0, 2.5 * PI], "vtk_stride": 1},
    }
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def _probe_series(tmp_path, outdir):
    rows = (outdir / "probe.csv").read_text().splitlines()[1:]
    return np.array([float(r.split(",")[1]) for r in rows])


def test_demo_outputs_and_linearity(tmp_path):
    p_by_amp = {}
    for amp in (15.0, 30.0):
        cfg = _demo_config(tmp_path, "linear", amp, t_final=4e-3,
                           name=f"demo{amp}.json")
        out = tmp_path / f"out{amp}"
        code = main(["--output-dir", str(out), "--quiet", "demo",
                     "--config", str(cfg)])
        assert code == 0
        assert (out / "centerline.csv").exists()
        assert (out / "demo_final.vtk").exists()
        p_by_amp[amp] = _probe_series(tmp_path, out)
    # superposition: doubling the excitation doubles the pressure
    # (up to the 12-digit rounding of the probe CSV)
    scale = np.abs(p_by_amp[30.0]).max()
    assert np.allclose(p_by_amp[30.0], 2.0 * p_by_amp[15.0],
                       rtol=1e-9, atol=1e-9 * scale)


def test_demo_westervelt_steepens_at_distal_probe(tmp_path):
    peaks = {}
    for model in ("linear", "westervelt"):
        cfg = _demo_config(tmp_path, model, 30.0, name=f"demo_{model}.json")
        out = tmp_path / f"out_{model}"
        code = main(["--output-dir", str(out), "--quiet", "demo",
                     "--config", str(cfg)])
        assert code == 0
        peaks[model] = np.abs(_probe_series(tmp_path, out)).max()
    assert peaks["westervelt"] > peaks["linear"]
