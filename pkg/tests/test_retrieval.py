from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelscope.clustering.partition import NOISE, Partition
from levelscope.corpus.model import LoggingStatement, MASK
from levelscope.retrieval import (
    IndexBuildError,
    RetrievalIndex,
    ScoreWeights,
    build_index,
    combined_score,
    exact_vs_ann_check,
    load_index,
)
from levelscope.semantic import EmbeddingSet
from oracles import cosine
from synthetic import synthetic_artifacts, synthetic_corpus


def brute_force_top_k(corpus, labels_by_file, emb, own, target, mode, k, weights=ScoreWeights()):
    """Score every same-cluster candidate directly and sort by (-score, id)."""
    file_pos = {p: i for i, p in enumerate(corpus.paths)}
    ti = file_pos[target.file]
    c = labels_by_file[ti]
    scored = []
    for s in corpus.statements:
        j = file_pos[s.file]
        if s.file == target.file or labels_by_file[j] != c:
            continue
        cs, co = cosine(emb[ti], emb[j]), cosine(own[ti], own[j])
        score = {"semantic": cs, "ownership": co}.get(mode, weights.w_sem * cs + weights.w_own * co)
        scored.append((-score, s.id, score))
    scored.sort()
    return [(sid, sc) for _, sid, sc in scored[:k]]


@pytest.fixture(scope="module")
def small():
    corpus, labels, emb, own = synthetic_corpus(300, statements_per_file=2, n_clusters=12, seed=1)
    parts, es, om = synthetic_artifacts(corpus, labels, emb, own, noise_clusters=(11,))
    idx = build_index(corpus, parts, es, om, seed=4)
    return corpus, labels, emb, own, parts, es, om, idx


@pytest.mark.parametrize("mode", ["semantic", "ownership", "multiplex"])
def test_exact_matches_brute_force(small, mode):
    corpus, labels, emb, own, parts, *_, idx = small
    lab = parts[mode].labels
    for t in corpus.statements[::7]:
        res = idx.retrieve(t, mode, 5)
        if lab[corpus.paths.index(t.file)] == NOISE:
            assert res.fallback_used
            continue
        expected = brute_force_top_k(corpus, lab, emb, own, t, mode, 5)
        assert res.ids == [sid for sid, _ in expected]
        np.testing.assert_allclose([s for _, s in res.examples], [s for _, s in expected], atol=1e-12)
        assert not res.fallback_used and res.cluster_id == lab[corpus.paths.index(t.file)]


def test_noise_file_and_small_cluster_fallback(small):
    corpus, labels, *_, idx = small
    noise_target = next(s for s in corpus.statements if labels[corpus.paths.index(s.file)] == 11)
    res = idx.retrieve(noise_target, "multiplex", 5)
    assert res.fallback_used and res.cluster_id == NOISE and len(res.examples) == 5
    assert all(s.file != noise_target.file for s, _ in res.examples)
    assert all(score == 0.0 for _, score in res.examples)
    assert res.ids == idx.retrieve(noise_target, "multiplex", 5).ids

    # a cluster of one file with two statements has zero candidates for its own statements
    lab = np.array(labels)
    lab[0] = 99
    parts = {"semantic": Partition(corpus.paths, lab, "semantic")}
    one = build_index(corpus, parts, small[5], small[6])
    t = corpus.statements[0]
    assert one.retrieve(t, "semantic", 5).fallback_used
    assert one.retrieve(t, "semantic", 0).fallback_used is False


def test_fewer_than_k_candidates_fallback_and_partial_fill(small):
    corpus, labels, emb, own, _, es, om, _ = small
    lab = np.array(labels)
    lab[:3] = 50  # three files, two statements each: four candidates per target
    parts = {"semantic": Partition(corpus.paths, lab, "semantic")}
    t = corpus.statements[0]
    full = build_index(corpus, parts, es, om).retrieve(t, "semantic", 5)
    assert full.fallback_used and not full.partial
    part = build_index(corpus, parts, es, om, partial_fill=True).retrieve(t, "semantic", 5)
    assert part.fallback_used and part.partial and len(part.ids) == 5
    in_cluster = {s.id for s in corpus.statements if s.file in corpus.paths[1:3]}
    assert set(part.ids[:4]) == in_cluster
    assert len(set(part.ids)) == 5


def test_baselines(small):
    corpus, *_, idx = small
    t = corpus.statements[10]
    assert idx.retrieve(t, "zero_shot", 5).examples == []
    g = idx.retrieve(t, "global_random", 5)
    assert len(g.ids) == 5 and not g.fallback_used and t.file not in {s.file for s, _ in g.examples}
    assert g.ids == idx.retrieve(t, "global_random", 5).ids
    d = idx.retrieve(t, "doc_component", 5)
    comp = corpus.file(t.file).component_label
    assert all(corpus.file(s.file).component_label == comp for s, _ in d.examples)
    assert "doc_component" in idx.modes
    with pytest.raises(ValueError):
        idx.retrieve(t, "bogus", 5)


def test_unknown_file_takes_fallback(small):
    *_, idx = small
    t = LoggingStatement("new#0", "src/New.java", 3, "info", "x", (1, 5), f"log.{MASK}(\"x\");")
    res = idx.retrieve(t, "multiplex", 5)
    assert res.unknown_file and res.fallback_used and len(res.ids) == 5


def test_too_small_project_returns_everything():
    corpus, labels, emb, own = synthetic_corpus(3, statements_per_file=1, n_clusters=1, seed=2)
    parts, es, om = synthetic_artifacts(corpus, labels, emb, own)
    idx = build_index(corpus, parts, es, om)
    res = idx.retrieve(corpus.statements[0], "multiplex", 5)
    assert res.fallback_used and len(res.ids) == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 599), st.sampled_from(["semantic", "ownership", "multiplex", "global_random", "doc_component"]),
       st.integers(1, 12))
def test_never_returns_own_file_and_scores_non_increasing(small, i, mode, k):
    corpus, *_, idx = small
    t = corpus.statements[i]
    res = idx.retrieve(t, mode, k)
    assert all(s.file != t.file for s, _ in res.examples)
    assert len(res.ids) == len(set(res.ids)) == k
    scores = [s for _, s in res.examples]
    assert all(a >= b for a, b in zip(scores, scores[1:]))


def test_zero_own_weight_multiplex_equals_semantic(small):
    corpus, *_, parts, es, om, _ = small
    idx = build_index(corpus, parts, es, om, weights=ScoreWeights(1.0, 0.0))
    for t in corpus.statements[::11]:
        assert idx.retrieve(t, "multiplex", 5).ids == idx.retrieve(t, "semantic", 5).ids


def test_semantic_increase_never_lowers_rank():
    corpus, labels, emb, own = synthetic_corpus(120, statements_per_file=1, n_clusters=2, seed=3)
    parts, es, om = synthetic_artifacts(corpus, labels, emb, own)
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = corpus.statements[int(rng.integers(len(corpus.statements)))]
        ti = corpus.paths.index(t.file)
        same = [j for j in range(len(corpus.paths)) if labels[j] == labels[ti] and j != ti]
        j = int(rng.choice(same))
        n = len(same)
        before = build_index(corpus, parts, es, om).retrieve(t, "multiplex", n).ids.index(corpus.statements[j].id)
        bumped = emb.copy()
        u = emb[ti] / np.linalg.norm(emb[ti])
        bumped[j] = emb[j] / np.linalg.norm(emb[j]) + 0.5 * u
        idx = build_index(corpus, parts, EmbeddingSet(corpus.paths, bumped, "synthetic"), om)
        assert cosine(bumped[j], emb[ti]) >= cosine(emb[j], emb[ti])
        after = idx.retrieve(t, "multiplex", n).ids.index(corpus.statements[j].id)
        assert after <= before


def test_ties_broken_by_statement_id():
    corpus, labels, _, _ = synthetic_corpus(10, statements_per_file=3, n_clusters=1, seed=0)
    emb = np.ones((10, 4))
    own = np.ones((10, 3))
    parts, es, om = synthetic_artifacts(corpus, labels, emb, own)
    idx = build_index(corpus, parts, es, om)
    t = corpus.statements[0]
    expected = sorted(s.id for s in corpus.statements if s.file != t.file)[:5]
    assert idx.retrieve(t, "multiplex", 5).ids == expected


def test_every_statement_in_one_cluster_list(small):
    corpus, *_, idx = small
    for mode in ("semantic", "ownership", "multiplex"):
        lists = idx.cluster_lists(mode)
        seen = [sid for ids in lists.values() for sid in ids]
        assert len(seen) == len(set(seen))
        noise = {s.id for s in corpus.statements if idx.cluster_of(s.file, mode) == NOISE}
        assert set(seen) | noise == {s.id for s in corpus.statements}
        assert not set(seen) & noise


def test_pool_restriction(small):
    corpus, *_, parts, es, om, _ = small
    pool = [s.id for s in corpus.statements[::2]]
    idx = build_index(corpus, parts, es, om, pool_ids=pool)
    assert idx.fallback_pool_ids() == sorted(pool)
    for t in corpus.statements[1::9]:
        assert set(idx.retrieve(t, "multiplex", 5).ids) <= set(pool)


def test_save_load_and_stale_bindings(small, tmp_path):
    corpus, labels, *_, parts, es, om, idx = small
    idx.save(tmp_path)
    back = load_index(tmp_path, corpus, parts, es, om)
    for t in corpus.statements[::13]:
        for mode in ("multiplex", "global_random"):
            assert back.retrieve(t, mode, 5).ids == idx.retrieve(t, mode, 5).ids
    changed = dict(parts)
    lab = parts["semantic"].labels.copy()
    lab[0], lab[1] = lab[1], lab[0]
    changed["semantic"] = Partition(corpus.paths, lab, "semantic")
    if not np.array_equal(lab, parts["semantic"].labels):
        with pytest.raises(IndexBuildError, match="stale"):
            load_index(tmp_path, corpus, changed, es, om)
    with pytest.raises(FileNotFoundError):
        load_index(tmp_path / "missing", corpus, parts, es, om)


def test_build_refuses_mismatched_artifacts(small):
    corpus, *_, parts, es, om, _ = small
    bad = Partition(corpus.paths[:-1], parts["semantic"].labels[:-1], "semantic")
    with pytest.raises(IndexBuildError):
        build_index(corpus, {"semantic": bad}, es, om)
    p = Partition(corpus.paths, parts["semantic"].labels, "semantic", corpus_hash="0" * 64)
    with pytest.raises(IndexBuildError):
        build_index(corpus, {"semantic": p}, es, om)
    with pytest.raises(ValueError):
        build_index(corpus, parts, es, om, search="hnsw")


def test_ivf_exhaustive_probe_matches_exact(small):
    corpus, *_, parts, es, om, _ = small
    idx = build_index(corpus, parts, es, om, search="ivf", ivf_min_files=10, nprobe=10_000)
    rep = exact_vs_ann_check(idx, corpus.statements[::5])
    assert rep.mismatch_rate == 0.0
    exact = build_index(corpus, parts, es, om)
    assert exact_vs_ann_check(exact, corpus.statements[::5]).mismatch_rate == 0.0


def test_weights_validation_and_score():
    with pytest.raises(ValueError):
        ScoreWeights(0.5, 0.6)
    with pytest.raises(ValueError):
        ScoreWeights(-0.1, 1.1)
    assert combined_score(1.0, 0.0) == pytest.approx(0.7)
    assert isinstance(build_index, object) and RetrievalIndex  # exported
