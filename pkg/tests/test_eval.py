import numpy as np
import pytest

from spikekg.evaluation import evaluate, rank, rank_queries, report_from_ranks
from spikekg.kg import TripleStore, Vocabulary
from spikekg.synth import random_graph

from oracles import brute_force_rank


def table_scorer(table):
    def scorer(s, p, o):
        return table[s, p, o]

    return scorer


def toy_store(n=3):
    vocab = Vocabulary([f"e{i}" for i in range(n)], ["r"]).freeze()
    return TripleStore(vocab, [(0, 0, 0)])


def test_best_score_ranks_first():
    table = np.zeros((3, 1, 3))
    table[0, 0] = [0.1, 0.5, 0.9]
    assert rank(table_scorer(table), (0, 0, 0), "object", toy_store(), "raw") == 1.0


def test_tie_is_averaged():
    table = np.zeros((3, 1, 3))
    table[0, 0] = [0.5, 0.5, 0.9]
    assert rank(table_scorer(table), (0, 0, 0), "object", toy_store(), "raw") == 1.5


def test_perfect_ranks():
    r = report_from_ranks(np.ones((4, 2)), "raw")
    assert r.mrr == 1.0 and r.hits_at[1] == 1.0


def test_mrr_arithmetic():
    r = report_from_ranks(np.array([[1.0], [4.0]]), "raw")
    assert r.mrr == 0.625
    assert r.hits_at == {1: 0.5, 3: 0.5, 10: 1.0}
    assert r.mean_rank == 2.5


def test_mrr_strictly_monotone():
    base = np.array([[2.0, 5.0], [3.0, 1.0]])
    better = base.copy()
    better[0, 1] = 4.0
    assert report_from_ranks(better, "raw").mrr > report_from_ranks(base, "raw").mrr


def test_report_bounds():
    ranks = np.random.default_rng(0).integers(1, 20, size=(30, 2)).astype(float)
    r = report_from_ranks(ranks, "raw")
    assert 0 < r.mrr <= 1
    hits = [r.hits_at[k] for k in (1, 3, 10)]
    assert hits == sorted(hits) and 0 <= hits[0] and hits[-1] <= 1


def test_unknown_mode_and_slot():
    store = toy_store()
    scorer = table_scorer(np.zeros((3, 1, 3)))
    with pytest.raises(ValueError):
        rank_queries(scorer, [(0, 0, 0)], "object", store, "fancy")
    with pytest.raises(ValueError):
        rank_queries(scorer, [(0, 0, 0)], "middle", store, "raw")


def test_empty_split_is_an_error():
    store = toy_store()
    with pytest.raises(ValueError):
        evaluate(table_scorer(np.zeros((3, 1, 3))), store, "test")


def _oracle_ranks(table, store, mode):
    true = {tuple(t) for name in ("train", "valid", "test") for t in store.split(name).tolist()}
    fn = lambda s, p, o: table[s, p, o]  # noqa: E731
    out = []
    for q in store.test.tolist():
        out.append([
            brute_force_rank(fn, q, slot, store.num_entities, true, filtered=(mode == "filtered"))
            for slot in ("subject", "object")
        ])
    return np.array(out)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("mode", ["raw", "filtered"])
def test_matches_brute_force_oracle(seed, mode):
    store = random_graph(5 + seed % 6, 2, 30, seed=seed)
    rng = np.random.default_rng(seed)
    # coarse scores force plenty of ties
    table = rng.integers(0, 4, size=(store.num_entities, 2, store.num_entities)).astype(float)
    report = evaluate(table_scorer(table), store, "test", mode)
    expected = _oracle_ranks(table, store, mode)
    assert np.array_equal(report.ranks, expected)
    oracle = report_from_ranks(expected, mode)
    assert report.mrr == float(np.mean(1.0 / expected))
    assert report.hits_at == {k: float(np.mean(expected <= k)) for k in (1, 3, 10)}
    assert report.mrr == oracle.mrr


@pytest.mark.parametrize("seed", range(5))
def test_filtered_never_worse_than_raw(seed):
    store = random_graph(12, 3, 80, seed=seed)
    table = np.random.default_rng(seed).normal(size=(12, 3, 12))
    raw = evaluate(table_scorer(table), store, "test", "raw").ranks
    filt = evaluate(table_scorer(table), store, "test", "filtered").ranks
    assert np.all(filt <= raw)


@pytest.mark.parametrize("transform", [np.exp, lambda x: 3.0 * x + 7.0, np.arctan, lambda x: x**3])
def test_monotone_transform_invariance(transform):
    store = random_graph(10, 2, 50, seed=9)
    table = np.random.default_rng(9).integers(-5, 5, size=(10, 2, 10)).astype(float)
    a = evaluate(table_scorer(table), store, "test", "filtered")
    b = evaluate(table_scorer(transform(table)), store, "test", "filtered")
    assert np.array_equal(a.ranks, b.ranks)
    assert a.mrr == b.mrr and a.hits_at == b.hits_at


def test_threads_do_not_change_results():
    store = random_graph(40, 3, 400, seed=1)
    table = np.random.default_rng(1).normal(size=(40, 3, 40))
    a = evaluate(table_scorer(table), store, "test", "filtered", chunk=7, threads=1)
    b = evaluate(table_scorer(table), store, "test", "filtered", chunk=7, threads=4)
    assert np.array_equal(a.ranks, b.ranks)


def test_csv_and_text(tmp_path):
    store = random_graph(8, 2, 30, seed=0)
    table = np.random.default_rng(0).normal(size=(8, 2, 8))
    report = evaluate(table_scorer(table), store, "test")
    path = tmp_path / "ranks.csv"
    report.write_csv(path, store)
    lines = path.read_text().splitlines()
    assert lines[0] == "subject,predicate,object,slot,rank"
    assert len(lines) == 1 + 2 * len(store.test)
    assert f"mrr = {report.mrr:.6f}" in report.to_text()
