import json
from pathlib import Path

import pytest

from karma.ar_fit import LossKind
from karma.exceptions import InvalidArgumentError, ParseError
from karma.kmodels import FamilyKind, InitKind, VanishPolicy
from karma.manifest import InputFormat, RunManifest


def test_run_manifest_defaults_build_two_cluster_ar1_config():
    config = RunManifest().to_config()

    assert config.k == 2
    assert config.family.kind is FamilyKind.AR_L2
    assert (config.family.p, config.family.q, config.family.d) == (1, 0, 0)
    assert config.init.kind is InitKind.PROTOTYPE


def test_run_manifest_coerces_enum_strings():
    manifest = RunManifest(format="long", loss="l1", init="partition")

    assert manifest.format is InputFormat.LONG
    assert manifest.loss is LossKind.L1
    assert manifest.init is InitKind.RANDOM_PARTITION


def test_run_manifest_unknown_enum_value_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError):
        RunManifest(vanish="explode")


def test_run_manifest_positive_q_selects_css_family():
    family = RunManifest(p=1, q=1).family()

    assert family.kind is FamilyKind.ARMA_CSS


def test_run_manifest_l1_loss_with_ma_part_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError, match="only available for AR"):
        RunManifest(q=1, loss=LossKind.L1)


@pytest.mark.parametrize(
    "field,value",
    [
        ("rolling_window", 0),
        ("d", -1),
        ("threshold", 1.0),
        ("lags", 0),
        ("k", 0),
        ("restarts", 0),
    ],
)
def test_run_manifest_out_of_range_field_raises_invalid_argument(field, value):
    with pytest.raises(InvalidArgumentError):
        RunManifest(**{field: value})


def test_merge_applies_only_non_none_overrides():
    base = RunManifest(k=4, seed=7)

    merged = base.merge({"k": None, "seed": 9, "vanish": "reassign"})

    assert merged.k == 4
    assert merged.seed == 9
    assert merged.vanish is VanishPolicy.REASSIGN_FARTHEST
    assert base.seed == 7


def test_merge_unknown_field_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError, match="Unknown manifest fields: bogus"):
        RunManifest().merge({"bogus": 1})


def test_to_dict_writes_enum_values_as_strings():
    data = RunManifest(loss=LossKind.L1).to_dict()

    assert data["loss"] == "l1"
    assert data["format"] == "wide"
    assert json.loads(json.dumps(data)) == data


def test_save_then_load_returns_equal_manifest(tmp_path: Path):
    manifest = RunManifest(input="data.csv", p=2, q=1, k=3, relaxed_lengths=True)
    path = tmp_path / "run.json"

    manifest.save(path)

    assert RunManifest.load(path) == manifest


def test_load_partial_document_keeps_defaults(tmp_path: Path):
    path = tmp_path / "run.json"
    path.write_text('{"k": 5}', encoding="utf-8")

    manifest = RunManifest.load(path)

    assert manifest.k == 5
    assert manifest.p == 1


def test_load_invalid_json_raises_parse_error_with_line(tmp_path: Path):
    path = tmp_path / "run.json"
    path.write_text('{\n"k": 5,\n}', encoding="utf-8")

    with pytest.raises(ParseError) as exc_info:
        RunManifest.load(path)

    assert exc_info.value.line == 3


def test_load_non_object_raises_parse_error(tmp_path: Path):
    path = tmp_path / "run.json"
    path.write_text("[1, 2]", encoding="utf-8")

    with pytest.raises(ParseError, match="JSON object"):
        RunManifest.load(path)
