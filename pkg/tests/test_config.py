from __future__ import annotations

import pytest

from heraldsim.config import ConfigError, RunConfig
from heraldsim.model import ExperimentParams


def test_defaults_reproduce_experiment_params():
    cfg = RunConfig()
    assert cfg.experiment_params() == ExperimentParams()
    assert cfg.tomo_eta() == 1.0
    assert cfg.override(**{"tomo.eta_correction": "hd"}).tomo_eta() == pytest.approx(0.72192)


def test_parse_with_comments_and_coercion():
    cfg = RunConfig.parse(
        """
        # a comment
        optics.eta_wg = 0.8   # trailing comment
        acquisition.n_traces = 2e3
        report.projection = no
        tomo.eta_correction = hd
        """
    )
    assert cfg["optics.eta_wg"] == 0.8
    assert cfg["acquisition.n_traces"] == 2000 and isinstance(cfg["acquisition.n_traces"], int)
    assert cfg["report.projection"] is False
    assert cfg["tomo.eta_correction"] == "hd"


@pytest.mark.parametrize(
    "text",
    [
        "optics.nonsense = 1",
        "optics.eta_wg = 0.5\noptics.eta_wg = 0.6",
        "optics.eta_wg 0.5",
        "acquisition.n_traces = 1.5",
        "optics.eta_wg = high",
        "report.projection = maybe",
        "optics.eta_wg = 1.5",
        "acquisition.n_traces = 0",
        "acquisition.sample_rate_hz = 5e8",
        "tomo.eta_correction = full",
        "synth.n_calibration = 10",
        "analysis.window_start_s = 1e-9",
    ],
)
def test_invalid_config_is_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_false_herald_fraction_defaults_to_rate_ratio():
    cfg = RunConfig.parse("herald.rate_hz = 1000\nherald.dark_rate_hz = 50")
    assert cfg.experiment_params().false_herald_fraction == pytest.approx(0.05)
    cfg = RunConfig.parse("herald.false_herald_fraction = 0.2")
    assert cfg.experiment_params().false_herald_fraction == pytest.approx(0.2)


def test_text_round_trip():
    cfg = RunConfig.parse("optics.eta_wg = 0.8\nrun.seed = 5\nanalysis.bootstrap = 3")
    assert RunConfig.parse(cfg.to_text()).values == cfg.values


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "nope.cfg")
    assert RunConfig.load(None).values == RunConfig().values


def test_override_rejects_unknown_key():
    with pytest.raises(ConfigError):
        RunConfig().override(**{"optics.bogus": 1})


def test_provenance_has_derived_efficiencies():
    prov = RunConfig().provenance()
    assert prov["derived"]["eta_hd"] == pytest.approx(0.72192)
    assert prov["derived"]["eta_tot"] == pytest.approx(0.69 * 0.96 * 0.72192)
    assert prov["config"]["run.seed"] == 20220901
