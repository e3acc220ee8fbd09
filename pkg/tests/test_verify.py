"""Golden-fixture replay: clean pass, tamper detection, loader errors."""

import json
import shutil
from pathlib import Path

import pytest

from tfrenorm.errors import ConfigError, ConsistencyError
from tfrenorm.verify import FIXTURE_NAMES, load_fixture, verify_fixtures

PACKAGED = Path(__file__).resolve().parents[1] / "src" / "tfrenorm" / "fixtures"


def copy_fixtures(tmp_path):
    for name in FIXTURE_NAMES:
        shutil.copy(PACKAGED / name, tmp_path / name)
    return tmp_path


def rewrite(dirpath, name, mutate):
    doc = json.loads((dirpath / name).read_text())
    mutate(doc)
    (dirpath / name).write_text(json.dumps(doc))


def test_clean_verification_passes_from_package():
    counts = verify_fixtures()
    assert counts == {
        "hierarchy.json": 10,
        "d0_rows.json": 4,
        "candidates.json": 3,
        "enumeration.json": 18,
        "constants.json": 30,
    }


def test_clean_verification_passes_from_directory(tmp_path):
    assert verify_fixtures(fixtures_dir=copy_fixtures(tmp_path)) == verify_fixtures()


def test_load_fixture_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_fixture("hierarchy.json", fixtures_dir=tmp_path)


def test_load_fixture_rejects_broken_json(tmp_path):
    d = copy_fixtures(tmp_path)
    (d / "candidates.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_fixture("candidates.json", fixtures_dir=d)


def test_perturbed_expansion_coefficient_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)

    def bump(doc):
        term = doc["entries"][4]["terms"][0]
        term["coeff"] = str(1.01 * float(term["coeff"]))

    rewrite(d, "hierarchy.json", bump)
    with pytest.raises(ConsistencyError, match="hierarchy"):
        verify_fixtures(fixtures_dir=d)


def test_perturbed_counterterm_weight_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)

    def bump(doc):
        for ent in doc["entries"]:
            for term in ent["terms"]:
                if term["c"]:
                    term["c"][0]["weight"] *= 1.01
                    return
        raise AssertionError("no c-list found in hierarchy fixture")

    rewrite(d, "hierarchy.json", bump)
    with pytest.raises(ConsistencyError, match="hierarchy"):
        verify_fixtures(fixtures_dir=d)


def test_perturbed_operator_row_weight_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)
    rewrite(
        d,
        "d0_rows.json",
        lambda doc: doc["rows"][0]["row"][0].__setitem__(
            "weight", 1.01 * doc["rows"][0]["row"][0]["weight"]
        ),
    )
    with pytest.raises(ConsistencyError, match="d0_rows"):
        verify_fixtures(fixtures_dir=d)


def test_perturbed_candidate_dimension_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)
    rewrite(d, "candidates.json", lambda doc: doc.__setitem__("d", 1.01 * doc["d"]))
    with pytest.raises(ConsistencyError, match="candidates"):
        verify_fixtures(fixtures_dir=d)


def test_dropped_candidate_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)
    rewrite(d, "candidates.json", lambda doc: doc["candidates"].pop())
    with pytest.raises(ConsistencyError, match="candidates"):
        verify_fixtures(fixtures_dir=d)


def test_perturbed_population_count_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)
    rewrite(
        d,
        "enumeration.json",
        lambda doc: doc["entries"][0].__setitem__(
            "count", 1.01 * doc["entries"][0]["count"]
        ),
    )
    with pytest.raises(ConsistencyError, match="enumeration"):
        verify_fixtures(fixtures_dir=d)


def test_perturbed_universal_constant_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)

    def bump(doc):
        row = doc["universal"][0]
        assert row["alpha"] == 0.5
        row["C1"] *= 1.01

    rewrite(d, "constants.json", bump)
    with pytest.raises(ConsistencyError, match="constants.universal"):
        verify_fixtures(fixtures_dir=d)


def test_perturbed_table_constant_is_caught(tmp_path):
    d = copy_fixtures(tmp_path)
    rewrite(
        d,
        "constants.json",
        lambda doc: doc["tables"][1].__setitem__("c2", 1.01 * doc["tables"][1]["c2"]),
    )
    with pytest.raises(ConsistencyError, match="constants.tables"):
        verify_fixtures(fixtures_dir=d)


def test_defect_message_lists_every_problem(tmp_path):
    d = copy_fixtures(tmp_path)
    rewrite(
        d,
        "enumeration.json",
        lambda doc: [e.__setitem__("count", e["count"] + 1) for e in doc["entries"][:2]],
    )
    with pytest.raises(ConsistencyError) as err:
        verify_fixtures(fixtures_dir=d)
    assert "2 defect(s)" in str(err.value)
