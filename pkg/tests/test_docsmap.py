import copy
import json

import pytest

from rieszstop.docsmap import check_manifest, find_manifest, load_manifest, registry


@pytest.fixture(scope="module")
def manifest():
    return load_manifest()


def test_complete_manifest_passes(manifest):
    rep = check_manifest(manifest)
    assert rep.ok, rep.diff()
    assert rep.diff() == ""


def test_manifest_matches_registry(manifest):
    listed = {a["id"]: a["target"] for a in manifest["anchors"]}
    assert listed == registry()
    assert all(a["summary"] for a in manifest["anchors"])
    assert manifest["out_of_scope"]


def test_removed_anchor_is_listed(manifest):
    m = copy.deepcopy(manifest)
    gone = m["anchors"].pop(0)
    rep = check_manifest(m)
    assert not rep.ok
    assert rep.missing_in_manifest == [gone["id"]]
    assert gone["id"] in rep.diff()


def test_renamed_target_fails(manifest):
    m = copy.deepcopy(manifest)
    entry = next(a for a in m["anchors"] if a["target"] == "perpetual.solve_perpetual")
    entry["target"] = "perpetual.solve_perpetual_renamed"
    rep = check_manifest(m)
    assert not rep.ok
    assert rep.unresolvable == ["perpetual.solve_perpetual_renamed"]
    assert rep.wrong_target == [(entry["id"], "perpetual.solve_perpetual_renamed", "perpetual.solve_perpetual")]


def test_dangling_anchor_fails(manifest):
    m = copy.deepcopy(manifest)
    m["anchors"].append({"id": "no-such-result", "summary": "x", "target": "model.GbmParams"})
    rep = check_manifest(m)
    assert rep.missing_in_code == ["no-such-result"]
    assert rep.duplicate_targets == ["model.GbmParams"]


def test_manifest_file_discovery(tmp_path, monkeypatch, manifest):
    (tmp_path / "a").mkdir()
    p = tmp_path / "a" / "paper_map.json"
    p.write_text(json.dumps(manifest))
    monkeypatch.setenv("RIESZSTOP_MANIFEST", str(p))
    assert find_manifest() == p
    assert check_manifest().ok
    monkeypatch.delenv("RIESZSTOP_MANIFEST")
    assert find_manifest(tmp_path / "a" / "deeper") == p
    with pytest.raises(FileNotFoundError):
        find_manifest(tmp_path / "b")
