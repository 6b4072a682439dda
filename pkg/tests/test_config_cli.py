import csv
import json
import math

import numpy as np
import pytest

from wienerchannel import cli
from wienerchannel.config import SEED_ENV, ConfigError, load_config, parse_config
from wienerchannel.oracle import gaussian_closed_form
from wienerchannel.priors import Atomic, GaussianDiagonal, ScaledShape

PM1 = """\
prior:
  kind: scaled_shape
  shape: constant
  amplitude: {kind: atomic, values: [-1, 1], weights: [0.5, 0.5]}
basis: {n: 8}
rho_grid: [0.5, 1.0]
mc: {samples: 4000, batches: 20, seed: 3}
convergence: {n_list: [2, 8]}
"""

GAUSS = """\
prior:
  kind: scaled_shape
  amplitude: {kind: gaussian, mean: 0.0, var: 1.0}
basis: {n: 4}
rho_grid: [0.5, 1.0, 2.0]
mc: {samples: 40000, batches: 40, seed: 1}
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_pm1():
    cfg = parse_config(PM1)
    prior = cfg.build_prior()
    assert isinstance(prior, ScaledShape) and prior.n == 8
    assert cfg.build_prior(2).n == 2
    assert cfg.rho_grid == (0.5, 1.0) and cfg.mc.seed == 3 and cfg.n_list == (2, 8)
    assert cfg.echo()["basis"]["n"] == 8


def test_parse_other_prior_kinds():
    text = "prior: {kind: atomic, atoms: [[1, 0], [0, 1]], weights: [0.3, 0.7]}\n" \
           "basis: {n: 2}\nrho_grid: [1]\n"
    assert isinstance(parse_config(text).build_prior(), Atomic)
    text = "prior: {kind: point_mass}\nbasis: {n: 3}\nrho_grid: [1]\n"
    p = parse_config(text).build_prior()
    np.testing.assert_array_equal(p.atoms, np.zeros((1, 3)))
    text = "prior: {kind: gaussian_diagonal, mean: 0, variances: 2}\nbasis: {n: 4, T: 2}\nrho_grid: [1]\n"
    g = parse_config(text).build_prior()
    assert isinstance(g, GaussianDiagonal)
    assert np.sum(g.variances) == pytest.approx(4.0)  # variance density 2 over T = 2


@pytest.mark.parametrize("text, needle", [
    ("prior: {kind: point_mass}\nbasis: {n: 2}\nrho_grid: []\n", "rho_grid"),
    ("prior: {kind: point_mass}\nbasis: {n: 0}\nrho_grid: [1]\n", "basis.n"),
    ("prior: {kind: banana}\nbasis: {n: 2}\nrho_grid: [1]\n", "prior.kind"),
    ("prior: {kind: point_mass}\nbasis: {n: 2}\nrho_grid: [1, 0.5]\n", "increasing"),
    ("prior: {kind: point_mass}\nbasis: {n: 2}\nrho_grid: [1]\nmc: {batches: 1}\n", "mc.batches"),
    ("basis: {n: 2}\nrho_grid: [1]\n", "prior"),
])
def test_invalid_configs(text, needle):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert any(needle in p for p in e.value.problems)


def test_all_problems_reported_with_lines():
    text = "prior: {kind: point_mass}\nbasis: {n: 2}\nrho_grid: [1]\nbogus: 1\n" \
           "mc: {samples: -5}\ntolerance: {sigmas: -1}\n"
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    probs = e.value.problems
    assert len(probs) >= 3
    assert any(p.startswith("line 4") and "bogus" in p for p in probs)
    assert any(p.startswith("line 5") for p in probs)


def test_yaml_syntax_error():
    with pytest.raises(ConfigError, match="YAML"):
        parse_config("prior: [unclosed\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_seed_precedence(tmp_path, monkeypatch):
    no_seed = PM1.replace(", seed: 3", "")
    assert parse_config(no_seed).mc.seed == 0
    assert parse_config(no_seed, default_seed=9).mc.seed == 9
    assert parse_config(PM1, default_seed=9).mc.seed == 3
    monkeypatch.setenv(SEED_ENV, "bad")
    assert cli.main(["sweep", "--config", _write(tmp_path, PM1), "--out", str(tmp_path)]) == 2


def test_cli_exit_code_for_empty_grid(tmp_path, capsys):
    bad = PM1.replace("rho_grid: [0.5, 1.0]", "rho_grid: []")
    assert cli.main(["verify", "--config", _write(tmp_path, bad)]) == 2
    assert "rho_grid" in capsys.readouterr().err


def test_cli_rejects_bad_threads(tmp_path):
    assert cli.main(["verify", "--config", _write(tmp_path, PM1), "--threads", "0"]) == 2


def test_sweep_gaussian_matches_oracle(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", _write(tmp_path, GAUSS), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert list(rows[0]) == list(cli.SWEEP_COLUMNS)
    for row in rows:
        rho = float(row["rho"])
        ref = gaussian_closed_form(1.0, 1.0, rho)
        assert abs(float(row["I_direct"]) - ref.I) <= 4 * float(row["I_direct_se"])
        assert abs(float(row["mmse_nc"]) - ref.mmse_nc) <= 4 * float(row["mmse_nc_se"])
    payload = json.loads((out / "sweep.json").read_text())
    assert payload["schema_version"] == cli.SCHEMA_VERSION


def test_verify_point_mass_all_pass(tmp_path):
    text = "prior: {kind: point_mass}\nbasis: {n: 3}\nrho_grid: [0.5, 1.0]\n" \
           "mc: {samples: 2000, batches: 10}\nanalytic_samples: 10\n"
    out = tmp_path / "out"
    assert cli.main(["verify", "--config", _write(tmp_path, text), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "verify.csv").open()))
    assert rows and all(r["pass"] == "true" for r in rows)
    assert sum(float(r["residual"]) == 0.0 for r in rows) >= 5


def test_verify_zero_tolerance_fails(tmp_path):
    text = PM1 + "tolerance: {sigmas: 0, analytic: 0, fd: 0, disc_factor: 0, per_sample: 0}\n"
    out = tmp_path / "out"
    assert cli.main(["verify", "--config", _write(tmp_path, text), "--out", str(out)]) == 1
    data = json.loads((out / "verify.json").read_text())
    assert data["all_passed"] is False


def test_verify_deterministic_across_threads(tmp_path):
    cfg = _write(tmp_path, PM1)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["verify", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
    assert cli.main(["verify", "--config", cfg, "--out", str(b), "--threads", "8"]) == 0
    for name in ("verify.csv", "verify.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_flag_changes_output(tmp_path):
    cfg = _write(tmp_path, PM1)
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["sweep", "--config", cfg, "--out", str(a)])
    cli.main(["sweep", "--config", cfg, "--out", str(b), "--seed", "99"])
    assert (a / "sweep.csv").read_bytes() != (b / "sweep.csv").read_bytes()


def test_convergence_outputs(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["convergence", "--config", _write(tmp_path, PM1), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "convergence.csv").open()))
    assert [int(r["n"]) for r in rows] == [2, 8, 2, 8]
    fits = json.loads((out / "convergence.json").read_text())["fits"]
    assert len(fits) == 2


def test_convergence_single_resolution_no_fit(tmp_path):
    text = PM1.replace("n_list: [2, 8]", "n_list: [8]")
    out = tmp_path / "out"
    assert cli.main(["convergence", "--config", _write(tmp_path, text), "--out", str(out)]) == 0
    fits = json.loads((out / "convergence.json").read_text())["fits"]
    assert all(f["order"] is None for f in fits)


def test_json_writes_nan_as_null():
    assert cli._jsonable([math.nan, 1.0, np.float64(math.inf)]) == [None, 1.0, None]
    assert cli._fmt(0.1) == "0.10000000000000001" and cli._fmt(True) == "true"


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    for p in sorted(root.glob("*.yaml")):
        assert load_config(p).mc.samples > 0


def test_pm1_scalar_battery_passes():
    text = "prior: {kind: atomic, atoms: [[-1], [1]], weights: [0.5, 0.5]}\n" \
           "basis: {n: 1}\nrho_grid: [1.0]\nmc: {samples: 200000, batches: 50, seed: 4}\n"
    reports = cli.run_verify(parse_config(text))
    names = {r.name for r in reports}
    assert {"duncan", "gsv", "debruijn", "trace_identity", "immse", "oracle_mutual_info"} <= names
    assert all(r.passed for r in reports), [r.name for r in reports if not r.passed]
