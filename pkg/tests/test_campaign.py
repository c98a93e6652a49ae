import json
import logging

import pytest

from sccbbp import campaign as cmod
from sccbbp.campaign import CampaignFailure, ExperimentConfig, aggregate, run_campaign, theory_report
from sccbbp.errors import ConstraintViolation


def _sweep(tmp_path, name, **kw):
    cfg = dict(kind="transition-sweep", sweep_t=[0.15, 0.6], replicates=6, seed=5,
               out_dir=str(tmp_path / name))
    cfg.update(kw)
    return ExperimentConfig(**cfg)


def test_config_round_trip_and_hash():
    cfg = ExperimentConfig(kind="detect", spikes={"t": [0.6, 0.1]}, replicates=10)
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg and back.config_hash() == cfg.config_hash()
    assert ExperimentConfig(**{**cfg.to_dict(), "workers": 4, "out_dir": "x"}).config_hash() == cfg.config_hash()
    assert ExperimentConfig(**{**cfg.to_dict(), "eps_tol": 0.2}).config_hash() != cfg.config_hash()


def test_config_validation():
    with pytest.raises(ConstraintViolation):
        ExperimentConfig(kind="bogus")
    with pytest.raises(ConstraintViolation):
        ExperimentConfig(eps_tol=0.0)
    with pytest.raises(ConstraintViolation):
        ExperimentConfig.from_dict({"nonsense": 1})
    with pytest.raises(ConstraintViolation):
        run_campaign(ExperimentConfig(kind="transition-sweep"), write=False)


def test_sweep_report_and_determinism(tmp_path):
    one = run_campaign(_sweep(tmp_path, "a", workers=1))
    two = run_campaign(_sweep(tmp_path, "b", workers=2))
    for f in ("summary.json", "records.csv", "records.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert len(one.records) == 12
    doc = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert doc["schema_version"] == 1 and doc["config_hash"] == one.config_hash
    assert [row["t"] for row in doc["summary"]["sweep"]] == [0.15, 0.6]
    assert doc["theory"]["context"]["t_c"] == pytest.approx(0.288675, abs=1e-6)
    # aggregation is a pure fold over the records
    assert aggregate(one.config, list(reversed(one.records))) == one.summary


def test_zero_replicates(tmp_path, caplog):
    cfg = ExperimentConfig(kind="rigidity", replicates=0, out_dir=str(tmp_path / "z"))
    with caplog.at_level(logging.WARNING):
        rep = run_campaign(cfg)
    assert rep.records == [] and "zero replicates" in caplog.text
    assert (tmp_path / "z" / "summary.json").exists()


def test_failure_budget(tmp_path, monkeypatch):
    real = cmod._replicate_body

    def flaky(config, replicate, t_value):
        if replicate == 3:
            raise RuntimeError("synthetic failure")
        return real(config, replicate, t_value)

    monkeypatch.setattr(cmod, "_replicate_body", flaky)
    cfg = ExperimentConfig(kind="rigidity", replicates=20, out_dir=str(tmp_path / "f"))
    with pytest.raises(CampaignFailure) as info:
        run_campaign(cfg)
    rep = info.value.report
    assert rep.failed_replicates == [3]
    assert rep.records[3]["seed"] == cfg.seed and "synthetic" in rep.records[3]["error"]


@pytest.mark.parametrize("kind, key", [
    ("rigidity", "fraction_within"), ("sticking", "fraction_within"),
    ("detect", "correct_rank_rate"), ("tw-edge", "ks_null"),
])
def test_campaign_kinds(kind, key):
    extra = {"goe_samples": 50, "goe_size": 60} if kind == "tw-edge" else {}
    cfg = ExperimentConfig(kind=kind, spikes={"t": [0.6, 0.1]}, replicates=5, **extra)
    rep = run_campaign(cfg, write=False)
    assert rep.summary[key] is not None
    assert rep.summary["succeeded"] == 5


def test_identities_campaign():
    rep = run_campaign(ExperimentConfig(kind="identities", replicates=4), write=False)
    assert rep.summary["all_passed"] and rep.summary["max_residual"] <= 1e-9


def test_theory_report():
    th = theory_report(ExperimentConfig(spikes={"t": [0.6, 0.1]}))
    assert th["r_plus"] == 1
    assert th["theta"][0] == pytest.approx(0.793333, abs=1e-6)
    assert th["context"]["lambda_plus"] == pytest.approx(0.696410, abs=1e-6)
    assert th["gammas"][0] == th["context"]["lambda_plus"]
    assert th["gammas"][-1] == pytest.approx(th["context"]["lambda_minus"], abs=0.02)
    empty = theory_report(ExperimentConfig(), include_gammas=False)
    assert empty["theta"] == [] and "gammas" not in empty


def test_alignment_spec_from_config():
    cfg = ExperimentConfig(spikes={"a": [1.0, 0.0], "b": [1.0, 0.0], "alignment": [[0, 1], [1, 0]]})
    sm = cmod.build_spike_model(cfg)
    assert sm.t_values.max() == pytest.approx(0.0)
    cfg2 = ExperimentConfig(spikes={"a": [1.0, 0.5], "alignment": ["random", 4]})
    assert cmod.build_spike_model(cfg2).r == 2
