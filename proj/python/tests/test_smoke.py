import json
import math
from pathlib import Path

import pytest

import grade

FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def test_aggregators():
    s = [0.5, 1.0]
    assert grade.aggregate(s, "min") == pytest.approx(0.5)
    assert grade.aggregate(s, "mean") == pytest.approx(0.25)
    assert grade.aggregate(s, "pmean:-2") == pytest.approx(1 - 2.5 ** -0.5)
    with pytest.raises(grade.GradeError):
        grade.aggregate([], "min")


def test_bins_and_pearson():
    assert grade.bin_sizes(10, 4) == [3, 3, 2, 2]
    assert grade.pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)
    assert grade.pearson([1, 1, 1], [1, 2, 3]) is None


def test_text_helpers():
    assert grade.split_sentences("Dr. Lee left. He came back!") == ["Dr. Lee left.", "He came back!"]
    text = " ".join(f"w{i}" for i in range(300))
    spans = [(a, b) for a, b, _ in grade.chunk_text(text, 128, 256, 50)]
    assert spans == [(0, 256), (206, 300)]
    with pytest.raises(grade.ConfigError):
        grade.chunk_text(text, 10, 20, 10)


def test_gmm():
    data = [[0.0], [0.1], [10.0], [10.1]]
    model = grade.fit_gmm(data, 2, seed=1)
    r = grade.responsibilities(model, data)
    assert all(math.isclose(sum(row), 1.0) for row in r)
    assert max(range(2), key=lambda j: r[0][j]) != max(range(2), key=lambda j: r[3][j])


def test_graph_augment_paths():
    def t(s, p, o, c):
        return {"subject": s, "predicate": p, "object": o, "sentence_id": "s-" + c, "claim_id": c}

    g = grade.build_graph([t("USA", "joined", "nato", "c1"), t("United States", "imposed", "sanctions", "c2"),
                           t("nato", "faced", "sanctions", "c3")])
    assert len(g["nodes"]) == 4
    out, report = grade.augment_graph(g, [{"cluster_id": 0, "members": ["USA", "United States"], "kind": "exact"}], {})
    assert report["nodes_removed"] == 1
    assert sorted(n["id"] for n in out["nodes"]) == ["nato", "sanctions", "usa"]
    paths = grade.enumerate_paths(g)
    assert [p["hop"] for p in paths] == [2]
    assert paths[0]["nodes"][0] == "usa"


def test_pipeline_dry_and_missing(tmp_path):
    assert grade.resolve_stages(["report", "ingest"]) == ["ingest", "report"]
    with pytest.raises(grade.MissingArtifactError):
        grade.run_pipeline(FIXTURES / "config.json", tmp_path, ["chunk"])
    with pytest.raises(grade.ConfigError):
        grade.resolve_stages(["bake"])


def test_pipeline_fixture_run(tmp_path):
    reports = grade.run_pipeline(FIXTURES / "config.json", tmp_path)
    assert reports[-1]["stage"] == "report"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["queries"] > 0
    again = grade.run_pipeline(FIXTURES / "config.json", tmp_path)
    assert {r["status"] for r in again} == {"cached"}
