from __future__ import annotations

import json

import pytest

from gostudy.config import BACKEND_URL_ENV, load_pipeline_config
from gostudy.errors import ConfigError

from .conftest import FIXTURES


def test_toml_fixture_parses(tmp_path):
    cfg = load_pipeline_config(FIXTURES / "pipeline.toml")
    assert [o.spec.name for o in cfg.organisms] == ["worm", "fruit_fly", "mouse", "yeast"]
    assert cfg.vsg.models["junior_a"] == "deepseek-r1"
    assert cfg.vsg.models["principal_investigator"] == "glm-4.7-flash"
    assert cfg.vsg.sampling.temperature == 0.0
    assert cfg.vsg.retry.attempts == 3
    assert cfg.mock_script == FIXTURES / "mock_script.json"
    assert cfg.report_annotations == FIXTURES / "support_annotations.json"
    worm = cfg.organisms[0].spec
    assert worm.terms == (
        ("GO:0000003", "reproduction"),
        ("GO:0016209", "antioxidant activity"),
    )


def test_environment_overrides_backend_url(monkeypatch):
    monkeypatch.setenv(BACKEND_URL_ENV, "http://override:9999/v1/chat")
    cfg = load_pipeline_config(FIXTURES / "pipeline.toml")
    assert cfg.vsg.backend_url == "http://override:9999/v1/chat"


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(tmp_path / "absent.toml")


def test_broken_toml_is_config_error(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("this is not = [valid", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)


def test_broken_json_is_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)


def test_missing_ontology_path_is_config_error(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "ontology": {"path": "never/here.obo"},
        "organisms": [{"name": "worm", "annotations": "also/missing.tsv"}],
    }), encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_pipeline_config(path)
    assert "here.obo" in str(info.value)


def test_unknown_edge_mode_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "ontology": {"path": str(FIXTURES / "ontology.obo")},
        "hfs": {"tie_break": "sideways"},
        "organisms": [{
            "name": "worm",
            "annotations": str(FIXTURES / "annotations" / "worm.tsv"),
        }],
    }), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)


def test_unknown_model_role_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "ontology": {"path": str(FIXTURES / "ontology.obo")},
        "organisms": [{
            "name": "worm",
            "annotations": str(FIXTURES / "annotations" / "worm.tsv"),
        }],
        "vsg": {"models": {"intern": "model-x"}},
    }), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)


def test_term_entries_need_id_and_label(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "ontology": {"path": str(FIXTURES / "ontology.obo")},
        "organisms": [{
            "name": "worm",
            "annotations": str(FIXTURES / "annotations" / "worm.tsv"),
            "terms": [{"id": "GO:0000003"}],
        }],
    }), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)
