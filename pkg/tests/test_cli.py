import csv
import json
import math

import numpy as np
import pytest

from dnmaps import cli
from dnmaps.cli import RunSpecError, parse_runspec

CHAIN4 = "domain = chain 4 1\n"


def write_spec(tmp_path, text, name="run.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def run_cli(tmp_path, text, out="out", extra=()):
    spec = write_spec(tmp_path, text)
    code = cli.main(["--spec", str(spec), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def test_minimal_spec_defaults():
    s = parse_runspec("domain=rectangle 8 8 0.125; command=spectrum")
    assert s.domain == ("rectangle", 8, 8, 0.125)
    assert s.command == "spectrum"
    assert s.potential == ("const", 0.0)
    assert s.tol == 1e-10 and s.zero_tol == 1e-8
    assert s.lambdas == [] and s.seed == 0


def test_lambda_range_inclusive():
    s = parse_runspec(CHAIN4 + "command = sweep\n[lambda]\nfrom = 0\nto = 50\nsteps = 200\n")
    lams = s.lambdas
    assert len(lams) == 200
    assert lams[0] == 0.0 and lams[-1] == 50.0


def test_single_step_range():
    s = parse_runspec(CHAIN4 + "command = sweep\n[lambda]\nfrom = 0.4\nto = 0.4\nsteps = 1\n")
    assert s.lambdas == [0.4]


def test_expressions_and_complex_values():
    s = parse_runspec(CHAIN4 + "command = maps\n[lambda]\nvalues = 4.5*pi**2, 1/64, 1+2j\n")
    assert s.lambdas[0] == pytest.approx(4.5 * math.pi**2)
    assert s.lambdas[1] == pytest.approx(1 / 64)
    assert s.lambdas[2] == 1 + 2j


@pytest.mark.parametrize(
    "text, fragment",
    [
        (CHAIN4 + "colour = 3\ncommand = spectrum\n", "line 2, column 1"),
        (CHAIN4 + "command = spectrum;  shade = 1\n", "line 2, column 22"),
        (CHAIN4 + "command = spectrum\n[lambda]\nstep = 3\n", "unknown key 'step'"),
        (CHAIN4 + "command = spectrum\n[nonsense]\n", "unknown section"),
        (CHAIN4 + "command spectrum\n", "expected key = value"),
        (CHAIN4 + "command = spectrum\ncommand = maps\n", "duplicate key"),
        (CHAIN4 + "command = spectrum\n[mask]\n", "non-mask domain"),
    ],
)
def test_syntax_errors_located(text, fragment):
    if "[mask]" in text:
        text += "11\n"
    with pytest.raises(RunSpecError) as err:
        parse_runspec(text)
    assert fragment in str(err.value)


@pytest.mark.parametrize(
    "text, field",
    [
        (CHAIN4 + "command = sweep\n[lambda]\nfrom = 0\nto = 1\nsteps = 0\n", "steps"),
        (CHAIN4 + "command = sweep\n[lambda]\nfrom = 2\nto = 1\nsteps = 5\n", "from"),
        ("domain = rectangle 4 4 -0.25\ncommand = spectrum\n", "h"),
        ("domain = chain 4 1\n", "command"),
        ("command = spectrum\n", "domain"),
        (CHAIN4 + "command = dance\n", "command"),
        (CHAIN4 + "command = maps\n", "lambda"),
        (CHAIN4 + "command = sweep\n[lambda]\nvalues = 1+1j\n", "values"),
        (CHAIN4 + "command = sweep\n[lambda]\nvalues = 1\nfrom = 0\nto = 1\nsteps = 2\n", "lambda"),
        (CHAIN4 + "command = spectrum\n[tolerances]\ntol = -1\n", "tol"),
        ("domain = mask 1\ncommand = spectrum\n", "mask"),
    ],
)
def test_semantic_errors_name_field(text, field):
    with pytest.raises(RunSpecError) as err:
        parse_runspec(text)
    assert f"'{field}'" in str(err.value)


def test_evaluate_whitelist():
    assert cli.evaluate("2*pi") == pytest.approx(2 * math.pi)
    assert cli.evaluate("sin(x)+y", {"x": 0.0, "y": 3.0}) == 3.0
    for bad in ("__import__('os')", "x.real", "[1, 2]", "open"):
        with pytest.raises(RunSpecError):
            cli.evaluate(bad, {"x": 1.0})


def test_mask_domain_orientation():
    s = parse_runspec("domain = mask 0.25\ncommand = spectrum\n[mask]\n1100\n1100\n1111\n1111\n")
    d = cli.build_domain(s)
    assert d.n_nodes == 21 and len(d.interior) == 5
    # top-left block selected, bottom rows full: the missing block is at the upper right
    assert not any((d.nodes[:, 0] > 2) & (d.nodes[:, 1] > 2))


def test_potential_forms():
    arr = parse_runspec(CHAIN4 + "command = spectrum\npotential = array 1 2 3 4\n")
    assert np.array_equal(cli.build_model(arr).V, [1, 2, 3, 4])
    ex = parse_runspec("domain = rectangle 2 2 0.5\ncommand = spectrum\npotential = expr x + 10*y\n")
    m = cli.build_model(ex)
    assert np.allclose(m.V, m.domain.positions() @ [1.0, 10.0])
    bad = parse_runspec(CHAIN4 + "command = spectrum\npotential = array 1 2\n")
    with pytest.raises(RunSpecError):
        cli.build_model(bad)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def test_spectrum_chain(tmp_path):
    code, out = run_cli(tmp_path, CHAIN4 + "command = spectrum\n")
    assert code == 0
    rows = read_csv(out / "spectrum.csv")
    assert [float(r["dirichlet"]) for r in rows] == pytest.approx([1.0, 3.0], abs=1e-12)
    assert [float(r["neumann"]) for r in rows] == pytest.approx([0.0, 2.0], abs=1e-12)
    assert "dirichlet_analytic" not in rows[0]


def test_spectrum_square_oracle_column(tmp_path):
    code, out = run_cli(tmp_path, "domain = rectangle 32 32 1/32\ncommand = spectrum\n")
    assert code == 0
    rows = read_csv(out / "spectrum.csv")
    first = float(rows[0]["dirichlet"])
    assert abs(first - 19.7392088) / 19.7392088 <= 3e-3
    assert max(float(r["relative_error"]) for r in rows) <= 1e-9


def test_spectrum_potential_shift(tmp_path):
    base = "domain = rectangle 6 4 0.25\ncommand = spectrum\n"
    _, out0 = run_cli(tmp_path, base, out="v0")
    _, out10 = run_cli(tmp_path, base + "potential = 10\n", out="v10")
    r0, r10 = read_csv(out0 / "spectrum.csv"), read_csv(out10 / "spectrum.csv")
    d0 = np.array([float(r["dirichlet"]) for r in r0])
    d10 = np.array([float(r["dirichlet"]) for r in r10])
    assert np.allclose(d10 - d0, 10.0, atol=1e-9)
    n0 = np.array([float(r["neumann"]) for r in r0])
    n10 = np.array([float(r["neumann"]) for r in r10])
    assert np.all(n10 - n0 >= 10.0 - 1e-9)


def test_maps_chain(tmp_path):
    code, out = run_cli(tmp_path, CHAIN4 + "command = maps\n[lambda]\nvalues = 0, 1, 2, 0.5+1j\n")
    assert code == 0
    rows = {r["lam"]: r for r in read_csv(out / "maps.csv")}
    assert rows["0"]["dim_mul_N"] == "1" and rows["0"]["dim_mul_D"] == "0"
    assert rows["1"]["dim_mul_D"] == "1" and rows["1"]["dim_dom_D"] == "1"
    assert rows["2"]["dim_ker_D"] == "1"
    assert rows["0"]["kappa_zero_D"] == "1"
    data = json.loads((out / "maps.json").read_text())
    assert data[0]["D"]["graph"]["ambient_dim"] == 4
    assert data[0]["spectrum_D"]["eigenvalues"] == pytest.approx([0.0, 2 / 3])


def test_verify_chain_exit_codes(tmp_path):
    text = CHAIN4 + "command = verify\n[lambda]\nvalues = 0, 1, 2, 3\n[verify]\nmu = 0, 1\n"
    code, out = run_cli(tmp_path, text)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] == 0 and summary["total"] > 0
    reports = json.loads((out / "reports.json").read_text())
    assert len(reports) == summary["total"]
    code, _ = run_cli(tmp_path, text, out="bad", extra=["--debug-corrupt", "1e-3"])
    assert code == 1


def test_verify_default_lambda(tmp_path):
    code, out = run_cli(tmp_path, "domain = rectangle 4 4 0.25\ncommand = verify\n")
    assert code == 0


def test_sweep_chain(tmp_path):
    code, out = run_cli(tmp_path, CHAIN4 + "command = sweep\n[lambda]\nfrom = -1\nto = 4\nsteps = 101\n")
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    lams = sorted({float(r["lam"]) for r in rows})
    assert len(lams) == 101
    at0 = sorted(float(r["eigenvalue"]) for r in rows if float(r["lam"]) == 0.0)
    assert at0 == pytest.approx([0.0, 2 / 3], abs=1e-12)

    def kappa_at(lam):
        (k,) = {int(r["kappa_minus"]) for r in rows if abs(float(r["lam"]) - lam) < 1e-9}
        return k

    assert [kappa_at(l) for l in (-0.5, 0.5, 1.5, 2.5, 3.5)] == [0, 1, 0, 1, 0]
    crossings = json.loads((out / "crossings.json").read_text())
    assert crossings["dirichlet"] == pytest.approx([1.0, 3.0])
    assert crossings["neumann"] == pytest.approx([0.0, 2.0], abs=1e-12)
    assert json.loads((out / "sweep_check.json").read_text())["passed"]


def test_sweep_single_point(tmp_path):
    code, out = run_cli(tmp_path, CHAIN4 + "command = sweep\n[lambda]\nfrom = 0.4\nto = 0.4\nsteps = 1\n")
    assert code == 0
    assert {r["lam"] for r in read_csv(out / "sweep.csv")} == {"0.4"}


def test_friedlander_chain(tmp_path):
    code, out = run_cli(tmp_path, CHAIN4 + "command = friedlander\n[lambda]\nvalues = 0.5, -1\n")
    assert code == 0
    rows = {r["lam"]: r for r in read_csv(out / "friedlander.csv")}
    assert rows["0.5"]["kappa_minus_D"] == "1" and rows["0.5"]["count_difference"] == "1"
    assert rows["-1"]["kappa_minus_D"] == "0"


def test_bad_spec_exit_code(tmp_path, capsys):
    code, _ = run_cli(tmp_path, CHAIN4 + "command = sweep\n[lambda]\nfrom = 0\nto = 1\nsteps = 0\n")
    assert code == 2
    assert "steps" in capsys.readouterr().err


def test_missing_spec_file(tmp_path):
    assert cli.main(["--spec", str(tmp_path / "absent.txt")]) == 2


def test_invalid_domain_exit_code(tmp_path):
    code, _ = run_cli(tmp_path, "domain = mask 1\ncommand = spectrum\n[mask]\n1\n")
    assert code == 2


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

DETERMINISM_SPECS = {
    "sweep": CHAIN4 + "command = sweep\n[lambda]\nfrom = -1\nto = 4\nsteps = 41\n",
    "maps": "domain = rectangle 4 3 0.25\ncommand = maps\n[lambda]\nvalues = 3.3, 1+1j\n",
    "verify": CHAIN4 + "command = verify\n[lambda]\nvalues = 0.5\n",
    "spectrum": "domain = rectangle 5 5 0.2\ncommand = spectrum\n",
}


@pytest.mark.parametrize("name", sorted(DETERMINISM_SPECS))
def test_repeated_runs_identical(tmp_path, name):
    text = DETERMINISM_SPECS[name]
    _, a = run_cli(tmp_path, text, out="a")
    _, b = run_cli(tmp_path, text, out="b", extra=["--threads", "3"])
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    assert cli._default_threads() == 4
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert cli._default_threads() == 1
