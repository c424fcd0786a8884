import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rareqc import io
from rareqc.cli import EXIT_CONFIG, EXIT_OK, EXIT_PHYSICS, main
from rareqc.config import ExperimentConfig, load_config, parse_config
from rareqc.errors import ConfigInvalid, UnknownRecipe
from rareqc.optctrl import StudyRow
from rareqc.recipes import RECIPES, run_experiment
from rareqc.report import RunReport, emit_report, parse_report


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.pumping.pit == (-9.0, 9.0)
    assert cfg.dynamics.optical_T1 == 164.0 and cfg.dynamics.hyperfine_T2 == 500.0
    assert cfg.readout.signal_mean == 100.0 and cfg.readout.background_mean == 50.0
    assert cfg.gates.grid == 8


@pytest.mark.parametrize("data,where", [
    ({"pumping": {"pit": [3, 1]}}, "pumping"),
    ({"pumping": {"rabi": -1}}, "pumping.rabi"),
    ({"crystal": {"profile": "boxcar"}}, "crystal.profile"),
    ({"bogus": 1}, "bogus"),
    ({"gates": {"grid": "many"}}, "gates.grid"),
])
def test_invalid_config_has_diagnostics(data, where):
    with pytest.raises(ConfigInvalid) as exc:
        parse_config(data)
    assert any(k.startswith(where) for k in exc.value.diagnostics)


def test_load_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 4\npumping:\n  pit: [-5, 5]\n")
    cfg = load_config(p)
    assert cfg.seed == 4 and cfg.pumping.pit == (-5.0, 5.0)
    assert load_config(p, {"seed": 9}).seed == 9
    p.write_text("- a\n- b\n")
    with pytest.raises(ConfigInvalid):
        load_config(p)
    p.write_text("seed: [unclosed\n")
    with pytest.raises(ConfigInvalid):
        load_config(p)
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "missing.yaml")


FIELDS = [("seed", None, 0, 1), ("pumping", "rabi", 0.5, 0.6), ("gates", "theta", 1.0, 1.5),
          ("readout", "window", 150.0, 149.0), ("optctrl", "n_starts", 5, 4),
          ("dynamics", "decoherence", True, False)]


@given(st.sampled_from(FIELDS), st.booleans())
def test_digest_changes_iff_semantic_change(field, change):
    section, key, a, b = field
    v = b if change else a

    def cfg(val):
        return parse_config({section: val} if key is None else {section: {key: val}})

    assert (cfg(a).digest() != cfg(v).digest()) == change
    assert cfg(a).digest() == parse_config(cfg(a).model_dump(mode="json")).digest()


def test_digest_ignores_output_dir():
    assert ExperimentConfig(output_dir="a").digest() == ExperimentConfig(output_dir="b").digest()


@given(st.dictionaries(st.text("abcdef_", min_size=1, max_size=8),
                       st.one_of(st.floats(allow_nan=False), st.integers(), st.text(max_size=5)), max_size=6),
       st.integers(0, 10**6))
def test_report_round_trip(metrics, seed):
    r = RunReport("x", "1", "d" * 64, seed, metrics, ["a.csv"], 1.5)
    back = parse_report(emit_report(r, "json"))
    assert back.to_dict() == r.to_dict()
    assert list(json.loads(emit_report(r, "json"))) == list(r.to_dict())


def test_text_report():
    r = RunReport("x", "1", "abc", 0, {"b": 0.5, "a": [1.0, 2.0]}, [], 0.0)
    txt = emit_report(r, "text")
    assert txt.index("a:") < txt.index("b:") and "0.5" in txt
    with pytest.raises(ValueError):
        emit_report(r, "xml")


def test_csv_round_trip(tmp_path):
    x = np.random.default_rng(0).normal(size=50)
    p = io.write_spectrum(tmp_path / "s.csv", x, x ** 2)
    header, cols = io.read_csv(p)
    assert header == io.SPECTRUM_HEADER
    np.testing.assert_array_equal(cols["freq_MHz"], x)
    np.testing.assert_array_equal(cols["alphaL"], x ** 2)
    p = io.write_populations(tmp_path / "p.csv", x[:3], np.ones((3, 6)) / 6)
    assert io.read_csv(p)[0] == io.POPULATION_HEADER
    p = io.write_study(tmp_path / "g.csv", [StudyRow(2.0, 0.9, 0.8)])
    assert io.read_csv(p)[1]["eff_multi_level"].tolist() == [0.8]
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "bad.csv", ("a", "b"), ([1.0], [1.0, 2.0]))


def test_state_dump_round_trip(tmp_path):
    rho = np.array([[0.5, 0.25j], [-0.25j, 0.5]])
    p = io.write_json(tmp_path / "s.json", io.state_dump(rho))
    np.testing.assert_array_equal(io.state_load(io.read_json(p)), rho)


def test_unknown_recipe(tmp_path):
    with pytest.raises(UnknownRecipe):
        run_experiment("fig99", out_dir=tmp_path)


def test_registry_is_versioned():
    assert {"fig2", "fig3-burnback", "fig4-sechyp", "dark-gate", "six-state-tomo", "fig5-beat",
            "fig6-grape-study", "readout", "chainmap", "scaling"} <= set(RECIPES)
    assert all(r.version for r in RECIPES.values())


def test_run_writes_report(tmp_path):
    rep = run_experiment("scaling", out_dir=tmp_path)
    on_disk = parse_report((tmp_path / "scaling" / "report.json").read_text())
    assert on_disk.metrics == rep.metrics and on_disk.config_digest == ExperimentConfig().digest()


def test_cli_success(tmp_path, capsys):
    assert main(["readout", "--out", str(tmp_path), "--format", "json"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["metrics"]["threshold"] == 73
    rep = json.loads((tmp_path / "readout" / "readout.json").read_text())
    assert set(rep) == {"threshold", "error_probability", "histogram"}


def test_cli_chainmap_and_scaling(tmp_path, capsys):
    assert main(["chainmap", "--out", str(tmp_path)]) == EXIT_OK
    assert main(["scaling", "--p", "0.1", "--n", "3", "--out", str(tmp_path), "--format", "json"]) == EXIT_OK
    out = capsys.readouterr().out
    assert json.loads(out[out.index("{"):])["metrics"]["usable_fraction"] == pytest.approx(0.01)


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("pumping:\n  rabi: -3\n")
    assert main(["pit", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "pumping.rabi" in capsys.readouterr().err
    assert main(["recipe", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_physics_error(tmp_path, capsys):
    assert main(["pit", "--low", "-10", "--high", "10", "--out", str(tmp_path)]) == EXIT_PHYSICS
    assert "PitTooWide" in capsys.readouterr().err


def test_cli_seed_override(tmp_path, capsys):
    assert main(["recipe", "chainmap", "--seed", "3", "--out", str(tmp_path), "--format", "json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["seed"] == 3


def test_cli_list(capsys):
    assert main(["list"]) == EXIT_OK
    assert "fig6-grape-study" in capsys.readouterr().out
