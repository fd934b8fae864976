import json

import pytest

from dsb.config import apply_overrides, default_config_text, load_config, parse_config, parse_json
from dsb.errors import ParseError, SemanticError
from dsb.registry import TrustModel


def raw_default():
    return json.loads(default_config_text())


def test_default_has_both_spaces(config):
    assert config.space_ids == ("space-j", "space-e")
    assert config.space("space-j").definition.trust_model is TrustModel.CENTRALIZED
    assert config.space("space-e").definition.trust_model is TrustModel.DECENTRALIZED
    assert config.space("space-e").definition.recognized_clearing_houses == frozenset({"gxdch"})


def test_load_from_path(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(default_config_text())
    assert load_config(path).space_ids == load_config().space_ids


def test_empty_file_is_parse_error_line_one():
    with pytest.raises(ParseError) as err:
        parse_json("  \n")
    assert err.value.line == 1


def test_bad_json_reports_line():
    with pytest.raises(ParseError) as err:
        parse_json('{\n  "a": 1,\n  "b": \n}')
    assert err.value.line == 4


def test_duplicate_space_id():
    raw = raw_default()
    raw["spaces"][1]["space_id"] = "space-j"
    with pytest.raises(SemanticError) as err:
        parse_config(raw)
    assert err.value.detail == "spaces[1].space_id"


@pytest.mark.parametrize(
    "patch,where",
    [
        ({"token_ttl": 0}, "token_ttl"),
        ({"token_ttl": True}, "<root>.token_ttl"),
        ({"spaces": []}, "spaces"),
        ({"index_threshold": 2}, "index_threshold"),
        ({"clearing_houses": [{"id": "x", "rules": []}]}, "clearing_houses[0].rules"),
    ],
)
def test_root_level_errors(patch, where):
    raw = raw_default()
    raw.update(patch)
    with pytest.raises(SemanticError) as err:
        parse_config(raw)
    assert err.value.detail == where


@pytest.mark.parametrize(
    "patch,where",
    [
        ({"trust_model": "Federated"}, "spaces[0].trust_model"),
        ({"validation_policy": ["kyc-magic"]}, "spaces[0].validation_policy"),
        ({"recognized_clearing_houses": ["nope"]}, "spaces[0].recognized_clearing_houses"),
        ({"capabilities": {"teleport": True}}, "spaces[0].capabilities.teleport"),
        ({"capabilities": {"pms": "yes"}}, "spaces[0].capabilities.pms"),
        ({"recognized_foreign_frameworks": ["space-j"]}, "space-j.recognized_foreign_frameworks"),
    ],
)
def test_space_level_errors(patch, where):
    raw = raw_default()
    raw["spaces"][0].update(patch)
    with pytest.raises(SemanticError) as err:
        parse_config(raw)
    assert err.value.detail == where


def test_overrides_merge_by_space_id(config):
    raw = apply_overrides(config.raw, {"spaces": {"space-e": {"capabilities": {"pms": True}}}, "broker": {"available": False}})
    cfg = parse_config(raw)
    assert cfg.space("space-e").definition.pms and cfg.space("space-e").definition.negotiation_api
    assert not cfg.broker_available
    assert config.space("space-e").definition.pms is False
    with pytest.raises(SemanticError):
        apply_overrides(config.raw, {"spaces": {"space-x": {}}})


def test_default_capabilities(config):
    j, e = config.space("space-j").definition, config.space("space-e").definition
    assert j.pms and not j.negotiation_api
    assert e.negotiation_api and not e.pms
