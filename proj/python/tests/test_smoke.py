import json
import math
from pathlib import Path

import numpy as np
import pytest

import agvp


def test_rrf_hand_values():
    fused = agvp.rrf([["a", "b", "c"], ["b", "a", "c"], ["a", "c", "b"]])
    assert [i for i, _ in fused] == ["a", "b", "c"]
    assert fused[0][1] == pytest.approx(1 / 61 + 1 / 62 + 1 / 61, abs=1e-15)
    with pytest.raises(agvp.AgvpError):
        agvp.rrf([["a", "b"], ["a", "c"]])


def test_rank_and_metrics():
    d = np.array([[0.2, 0.1, 0.2]])
    (lst,) = agvp.rank(d, ["q"], ["g1", "g2", "g3"])
    assert [i for i, _ in lst] == ["g2", "g1", "g3"]
    assert agvp.cmc([[False, True, False]], 1) == 0.0
    assert agvp.cmc([[False, True, False]], 2) == 1.0
    assert agvp.mean_ap([[True, False, True]]) == pytest.approx(5 / 6)
    q = np.array([[1.0, 0.0]])
    g = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    assert np.allclose(agvp.distances(q, g), [[0.0, 1.0, 2.0]])


def test_uv_chain():
    rng = np.random.default_rng(0)
    side = 8
    tex = rng.uniform(0.1, 0.9, size=(side * side, 3))
    mask = np.ones((side, side))
    out = agvp.normalize_uv(tex, mask)
    assert np.allclose(out.mean(axis=0), 0.5, atol=0.05)
    assert np.allclose(agvp.gamma_correct(np.full((4, 3), 0.25), 2.0), 0.0625)
    agg, valid = agvp.normalize_and_aggregate([tex], [mask], gamma=False)
    assert np.allclose(agg, agvp.histogram_match(out, mask, out, mask))
    assert valid.min() == 1.0
    agg, valid = agvp.normalize_and_aggregate([tex, tex], [np.zeros((side, side))] * 2)
    assert valid.max() == 0.0 and agg.max() == 0.0
    with pytest.raises(ValueError):
        agvp.normalize_uv(tex[:10], mask)


def test_corpus_evaluate_and_embedding_files(tmp_path: Path):
    n = agvp.generate_corpus({"num_identities": 3, "tracklets_per_identity_per_platform": 1,
                              "frames_per_tracklet": 2, "seed": 5}, tmp_path / "corpus")
    tracks = agvp.load_manifest(tmp_path / "corpus" / "manifest.jsonl")
    assert len(tracks) == n == 9
    people = sorted({t["person_id"] for t in tracks})
    ids = [t["tracklet_id"] for t in tracks]
    emb = np.zeros((len(tracks), len(people)))
    for i, t in enumerate(tracks):
        emb[i, people.index(t["person_id"])] = 1.0
    for direction in ("a2g", "g2a"):
        rep = agvp.evaluate(tmp_path / "corpus" / "manifest.jsonl", ids, emb, direction)
        assert all(b["rank1"] == 1.0 and b["mAP"] == 1.0 for b in rep["buckets"])
    agvp.write_embeddings(tmp_path / "e.emb", ids, emb)
    back_ids, back = agvp.read_embeddings(tmp_path / "e.emb")
    assert back_ids == ids and np.array_equal(back, emb)
    with pytest.raises(ValueError):
        agvp.generate_corpus({"num_identites": 3}, tmp_path / "bad")


def test_default_configs():
    rc = agvp.default_run_config()
    assert rc["gen"]["num_identities"] == 30
    assert rc["streams"]["3"]["msa"]["train_encoder"] is True
    assert math.isclose(rc["split"]["train_fraction"], 0.5)
    assert json.loads(json.dumps(agvp.default_gen_config()))["altitudes"] == [15, 120]
