import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinlab.cli import main
from kinlab.harness import REGISTRY, fit_rate, parse_config_text, run_experiment
from kinlab.harness.config import ExperimentConfig, format_value, with_overrides
from kinlab.harness.report import CertificateReport, rows_to_csv, verify_summary, write_reports
from kinlab.kinetic import Splitting
from kinlab.scattering import ScatteringKind


def test_fit_rate_examples():
    x = [0.1, 0.2, 0.4, 0.8]
    f = fit_rate([(a, a**2) for a in x])
    assert f.slope == pytest.approx(2.0, abs=1e-12) and f.r2 == pytest.approx(1.0)
    c = fit_rate([(a, 3.0) for a in x])
    assert c.slope == pytest.approx(0.0, abs=1e-12) and c.r2 == 1.0
    lin = fit_rate([(1, 1), (2, 3), (3, 5)], log_log=False)
    assert (lin.slope, lin.intercept) == pytest.approx((2.0, -1.0))
    assert lin.predict([4]) == pytest.approx([7.0])


def test_fit_rate_noise():
    rng = np.random.default_rng(3)
    x = np.geomspace(0.01, 1, 30)
    y = np.sqrt(x) * (1 + 0.01 * rng.standard_normal(30))
    assert fit_rate(zip(x, y)).slope == pytest.approx(0.5, abs=0.03)


def test_fit_rate_guards():
    with pytest.raises(ValueError):
        fit_rate([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_rate([(1, 1), (2, -2), (3, 3)])
    with pytest.raises(ValueError):
        fit_rate([(1, 1), (1, 2), (1, 3)])


@settings(max_examples=40, deadline=None)
@given(slope=st.floats(-3, 3), scale=st.floats(0.01, 100))
def test_fit_rate_recovers_power_law(slope, scale):
    x = [0.05, 0.1, 0.2, 0.4]
    f = fit_rate([(a, scale * a**slope) for a in x])
    assert f.slope == pytest.approx(slope, abs=1e-9)


def test_config_parsing_and_defaults():
    cfgs = parse_config_text(
        "[common]\nnv = 8\nseed = 11\n[E2]\nnx = 15 31\neps = 0.4 0.1\nscattering = neutron fp\nsplitting = lie\n"
    )
    (c,) = cfgs
    assert c.experiment == "E2" and c.nv == 8 and c.seed == 11
    assert c.nx == (15, 31) and c.grid_n == 15
    assert c.scattering == (ScatteringKind.NEUTRON, ScatteringKind.FOKKER_PLANCK)
    assert c.splitting is Splitting.LIE
    assert c.T == ExperimentConfig("E1").T


@pytest.mark.parametrize(
    "text",
    [
        "[E1]\nbogus = 1\n",
        "[E9]\nnx = 5\n",
        "[E1]\neps = 0.1 0.2\n",
        "[E1]\neps = 0.4 2.0\n",
        "[E1]\np = 2\n",
        "[E1]\nmu = 1.0\n",
        "[E1]\nreport_anisotropic = maybe\n",
        "[common]\nnv = 8\n",
    ],
)
def test_config_rejects_bad_input(text):
    with pytest.raises(ValueError):
        parse_config_text(text)


def test_relaxation_aliases():
    from kinlab.scattering import RelaxationMethod

    for word in ("be", "backward_euler", "BE"):
        assert parse_config_text(f"[E1]\nrelaxation = {word}\n")[0].relaxation is RelaxationMethod.BACKWARD_EULER
    assert parse_config_text("[E1]\n")[0].relaxation is RelaxationMethod.EXACT


def test_config_keys_are_case_sensitive():
    assert parse_config_text("[E4]\nT_list = 0.1 0.2\n")[0].T_list == (0.1, 0.2)
    with pytest.raises(ValueError):
        parse_config_text("[E4]\nt_list = 0.1\n")


def test_format_value_round_trips():
    c = ExperimentConfig("E3", eps=(0.5, 0.125), scattering=(ScatteringKind.FOKKER_PLANCK,), report_anisotropic=True)
    text = "[E3]\n" + "".join(
        f"{k} = {format_value(getattr(c, k))}\n"
        for k in ("eps", "scattering", "report_anisotropic", "splitting", "relaxation", "scheme", "T")
    )
    back = parse_config_text(text)[0]
    for k in ("eps", "scattering", "report_anisotropic", "splitting", "relaxation", "scheme", "T"):
        assert getattr(back, k) == getattr(c, k)


def test_csv_format_and_verify(tmp_path):
    rep = CertificateReport("EX")
    rep.rows.append({"a": 0.1, "b": True})
    rep.rows.append({"a": 1e-300, "c": "x"})
    rep.check("good", 1.0, 2.0)
    rep.check("bad", 2.0, 1.0, asserted=False)
    text = rows_to_csv(rep.rows)
    assert text.splitlines() == ["a,b,c", "0.10000000000000001,true,", "1e-300,,x"]
    assert float(text.splitlines()[1].split(",")[0]) == 0.1
    paths = write_reports([rep], tmp_path)
    assert [p.name for p in paths] == ["EX.csv", "summary.csv"]
    with open(paths[-1], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["check_name"] for r in rows] == ["good", "bad [reported]"]
    assert [r["pass"] for r in rows] == ["true", "false"]
    assert all(v.consistent for v in verify_summary(paths[-1]))
    assert rep.passed and rep.summary_line() == "EX: PASS (1/1 checks)"


def test_verify_detects_tampering(tmp_path):
    path = tmp_path / "summary.csv"
    path.write_text("experiment,check_name,lhs,rhs,margin,pass\nE1,x,2.0,1.0,-1.0,true\n")
    assert not verify_summary(path)[0].consistent
    assert main(["verify", str(path)]) == 1
    (tmp_path / "bad.csv").write_text("experiment,lhs\nE1,1\n")
    with pytest.raises(ValueError):
        verify_summary(tmp_path / "bad.csv")


def _small(exp, **kw):
    base = dict(nx=(11,), nv=8, eps=(0.4, 0.2, 0.1), T=0.25, steps=20, snapshots=2, samples=2)
    base.update(kw)
    return ExperimentConfig(exp, **base)


def test_trace_with_zero_data_passes_trivially():
    rep = run_experiment(_small("E2", initial=("zero",)))
    assert rep.passed
    assert all(c.lhs == 0.0 for c in rep.checks if c.asserted and "outflow" in c.name)


def test_registry_and_cli_list(capsys):
    assert list(REGISTRY) == [f"E{i}" for i in range(1, 9)]
    assert main(["list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 8 and out[0].startswith("E1  ")


def test_cli_run_writes_summary(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[common]\nnv = 8\nsamples = 2\n[E6]\n[E3]\nnx = 11\neps = 0.4 0.2\nT = 0.25\nsteps = 20\n")
    code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--only", "E3"])
    out = capsys.readouterr().out
    assert "E3: PASS" in out and "E6" not in out
    assert code == 0
    assert main(["verify", str(tmp_path / "o" / "summary.csv")]) == 0


def test_with_overrides_revalidates():
    c = _small("E1")
    assert with_overrides(c, nv=4).nv == 4
    with pytest.raises(ValueError):
        with_overrides(c, mu=0.0)
