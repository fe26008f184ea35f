import csv
import subprocess
import sys

import pytest

from infserver.battles import load_scenarios, replot, run_battle, run_figure1
from infserver.battles.cli import main
from infserver.battles.core import EXIT_CONTRADICTION, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE
from infserver.errors import UsageError
from infserver.stability import Verdict


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_builtin_scenarios():
    sc = load_scenarios()
    assert {"battle-1", "battle-2", "battle-3", "battle-4", "idle"} <= set(sc)
    assert sc["battle-3"].expected_verdict is Verdict.UNSTABLE
    assert sc["battle-4"].spec.batch.p == 0.5 and sc["battle-4"].spec.sojourn.p == 3.0


def test_scenario_file_overlay(tmp_path):
    f = tmp_path / "extra.ini"
    f.write_text("[mine]\nlambda = 2\nbatch_p = 3\nsojourn = det:1.5\ntimes = 2\n")
    sc = load_scenarios(f)
    assert sc["mine"].spec.lam == 2.0 and sc["mine"].times == (2.0,)
    f.write_text("[bad]\nlambda = 2\n")
    with pytest.raises(UsageError):
        load_scenarios(f)


@pytest.mark.parametrize("name,verdict,criterion", [
    ("battle-1", "Stable", "log-criterion"),
    ("battle-2", "Stable", "holder"),
    ("battle-3", "Unstable", "esx-divergence"),
    ("battle-4", "Stable", "holder"),
    ("idle", "Stable", "esx-convergence"),
])
def test_run_battle(tmp_path, name, verdict, criterion):
    res = run_battle(load_scenarios()[name], tmp_path, seed=1, replications=300, order=128)
    assert res.status == EXIT_OK
    v = _rows(tmp_path / name / "verdict.csv")
    assert v[0]["verdict"] == verdict and v[0]["criterion"] == criterion
    for f in ("verdict.txt", "simulation.csv", "distribution.csv", "distribution.svg"):
        assert (tmp_path / name / f).exists()
    sources = {r["source"] for r in _rows(tmp_path / name / "distribution.csv")}
    assert sources == {"analytic", "sim"}


def test_idle_point_mass(tmp_path):
    run_battle(load_scenarios()["idle"], tmp_path, seed=0, replications=10, order=16)
    rows = _rows(tmp_path / "idle" / "distribution.csv")
    for r in rows:
        assert float(r["prob"]) == (1.0 if r["n"] == "0" else 0.0)


def test_contradiction_exit(tmp_path):
    f = tmp_path / "wrong.ini"
    f.write_text("[wrong]\nlambda = 1\nbatch_p = 0.5\nsojourn = pl:2\nexpected = Stable\n"
                 "outputs = verdict\n")
    assert main(["run", "wrong", "--config", str(f), "--out", str(tmp_path / "o")]) == EXIT_CONTRADICTION


def test_seed_fixes_outputs(tmp_path):
    sc = load_scenarios()["battle-3"]
    a, b = tmp_path / "a", tmp_path / "b"
    run_battle(sc, a, seed=7, replications=200, order=64)
    run_battle(sc, b, seed=7, replications=200, order=64)
    for f in ("verdict.csv", "simulation.csv", "distribution.csv", "distribution.svg"):
        assert (a / "battle-3" / f).read_bytes() == (b / "battle-3" / f).read_bytes()
    c = tmp_path / "c"
    run_battle(sc, c, seed=8, replications=200, order=64)
    assert (a / "battle-3" / "simulation.csv").read_bytes() != (c / "battle-3" / "simulation.csv").read_bytes()


def test_replot_bit_identical(tmp_path):
    run_battle(load_scenarios()["battle-1"], tmp_path, seed=0, replications=100, order=64)
    run_figure1([0.5, 1.0], tmp_path)
    svgs = sorted(tmp_path.glob("**/*.svg"))
    before = {p: p.read_bytes() for p in svgs}
    for p in svgs:
        p.unlink()
    done = replot(tmp_path)
    assert sorted(done) == svgs
    assert all(p.read_bytes() == before[p] for p in svgs)


def test_figure1_slopes(tmp_path):
    files = run_figure1([0.5, 1.0, 2.0], tmp_path)
    assert [f.name for f in files] == ["figure1.csv", "figure1_slopes.csv", "figure1.svg"]
    slopes = {r["curve"]: r for r in _rows(tmp_path / "figure1_slopes.csv")}
    for p in (0.5, 1.0, 2.0):
        r = slopes[f"p={p:g}"]
        assert float(r["pmf_slope"]) == pytest.approx(-(p + 1.0), abs=0.05)
        assert float(r["survival_slope"]) == pytest.approx(-p, abs=0.05)
    assert "geometric" in slopes
    svg = (tmp_path / "figure1.svg").read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")


def test_figure1_empty(tmp_path):
    with pytest.raises(UsageError):
        run_figure1([], tmp_path)


def test_cli_exit_codes(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["run", "nope"]) == EXIT_USAGE
    assert main(["run", "battle-1", "--all"]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["figure1", "--p", "", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["figure1", "--p", "x", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["verdict", "--batch-p", "1", "--sojourn", "zz:1", "--lambda", "1"]) == EXIT_USAGE
    assert main(["verdict", "--batch-p", "-1", "--sojourn", "pl:2", "--lambda", "1"]) == EXIT_USAGE
    assert main(["list"]) == EXIT_OK


def test_cli_verdict(capsys):
    assert main(["verdict", "--batch-p", "1/2", "--sojourn", "pl:2", "--lambda", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "verdict: Unstable" in out and "Poisson-batch only" in out
    assert main(["verdict", "--batch-p", "1", "--sojourn", "exp:1", "--lambda", "1"]) == EXIT_OK
    assert "log-criterion" in capsys.readouterr().out


def test_cli_figure1(tmp_path, capsys):
    assert main(["figure1", "--p", "1", "--out", str(tmp_path)]) == EXIT_OK
    r = _rows(tmp_path / "figure1_slopes.csv")[0]
    assert float(r["pmf_slope"]) == pytest.approx(-2.0, abs=0.05)


def test_cli_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["figure1", "--out", str(blocker / "sub")]) == 1


def test_cli_numerical_failure(tmp_path, monkeypatch):
    from infserver.battles import cli
    from infserver.errors import NumericalFailure

    def boom(*a, **k):
        raise NumericalFailure("coefficient is negative")

    monkeypatch.setattr(cli, "run_battle", boom)
    assert main(["run", "battle-1", "--out", str(tmp_path)]) == EXIT_NUMERICAL


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "infserver.battles.cli", "list"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "battle-3" in r.stdout
