"""Command-line front end: CSV contract, determinism, tableau dump."""

import io

import numpy as np
import pytest

from sirk.cli import (
    RunConfig,
    dump_tableau,
    main,
    perturbed_initial,
    run_ensemble,
    run_single,
)
from sirk.tableau import UnsupportedStageCount


def _read_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "# sirk-csv v1"
    header = lines[1].split(",")
    rows = [[float(x) for x in ln.split(",")] for ln in lines[2:]]
    return header, rows


def test_single_run_two_rows(tmp_path, capsys):
    out = tmp_path / "run.csv"
    cfg = RunConfig(problem="harmonic", s=3, h=0.125, t_end=0.125, output=str(out))
    assert run_single(cfg) == 0
    header, rows = _read_csv(out)
    assert header == ["t", "energy_rel_err", "mean_iterations", "mean_linear_solves"]
    assert len(rows) == 2
    assert rows[0][0] == 0.0 and rows[1][0] == 0.125
    summary = capsys.readouterr().out
    assert "cpu_time_seconds=" in summary and "max_energy_error=" in summary


def test_single_run_fixed_point(tmp_path):
    out = tmp_path / "fp.csv"
    cfg = RunConfig(problem="harmonic", s=2, h=0.1, t_end=1.0, method="fixed_point",
                    output=str(out))
    assert run_single(cfg) == 0
    _, rows = _read_csv(out)
    assert len(rows) == 11
    assert all(r[3] == 0.0 for r in rows)  # no linear solves in fixed point


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_single_run_failure_exit(tmp_path, capsys):
    # fixed point diverges for omega h >> 1; must exit nonzero with step index
    out = tmp_path / "bad.csv"
    cfg = RunConfig(problem="double-pendulum", k=2.0**24, s=6, h=0.25, t_end=1.0,
                    method="fixed_point", output=str(out))
    assert run_single(cfg) != 0
    assert "step" in capsys.readouterr().err


def test_perturbation_depends_only_on_seed_and_index():
    y0 = np.array([1.0, 2.0, 3.0, 4.0])
    a = perturbed_initial(y0, 1e-6, 42, 7)
    b = perturbed_initial(y0, 1e-6, 42, 7)
    c = perturbed_initial(y0, 1e-6, 42, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.abs(a / y0 - 1.0).max() <= 1e-6


def test_ensemble_bitwise_deterministic(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        cfg = RunConfig(problem="harmonic", s=2, h=0.125, t_end=1.0, sampling=2,
                        ensemble_size=2, rng_seed=5, output=str(out))
        assert run_ensemble(cfg) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_ensemble_csv_columns(tmp_path):
    out = tmp_path / "e.csv"
    cfg = RunConfig(problem="harmonic", s=2, h=0.125, t_end=0.5, ensemble_size=3,
                    rng_seed=1, output=str(out))
    assert run_ensemble(cfg) == 0
    header, rows = _read_csv(out)
    assert header == ["t", "mean_energy_err", "std_energy_err"]
    assert len(rows) == 5
    assert all(r[2] >= 0.0 for r in rows)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ensemble_failure_policy(tmp_path, capsys):
    # divergent fixed point: every trajectory fails -> nonzero exit
    out = tmp_path / "f.csv"
    cfg = RunConfig(problem="double-pendulum", k=2.0**24, s=6, h=0.25, t_end=1.0,
                    method="fixed_point", ensemble_size=3, output=str(out))
    assert run_ensemble(cfg) != 0


def test_dump_tableau_text():
    buf = io.StringIO()
    assert dump_tableau(1, out=buf) == 0
    text = buf.getvalue()
    assert "0x1.0000000000000p-1" in text
    assert "verification PASS" in text
    buf = io.StringIO()
    assert dump_tableau(6, out=buf) == 0
    sigma_line = [ln for ln in buf.getvalue().splitlines() if ln.startswith("sigma:")][0]
    sigmas = [float.fromhex(tok) for tok in sigma_line.split()[1:]]
    assert len(sigmas) == 3
    assert sigmas == sorted(sigmas, reverse=True) and min(sigmas) > 0


def test_dump_tableau_range():
    with pytest.raises(UnsupportedStageCount):
        dump_tableau(9)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(h=-0.1)
    with pytest.raises(ValueError):
        RunConfig(t_end=0.0)
    with pytest.raises(ValueError):
        RunConfig(sampling=0)
    with pytest.raises(ValueError):
        RunConfig(problem="lorenz")
    with pytest.raises(ValueError):
        RunConfig(method="euler")


def test_main_entry_points(tmp_path, capsys):
    assert main(["--dump-tableau", "2"]) == 0
    capsys.readouterr()
    assert main(["--dump-tableau", "12"]) == 2
    capsys.readouterr()
    out = tmp_path / "m.csv"
    rc = main(["--problem", "harmonic", "--stages", "2", "--h", "0.25",
               "--t-end", "0.5", "--out", str(out)])
    assert rc == 0
    assert out.exists()
    assert main(["--h", "-1"]) == 2
