import numpy as np
import pytest

from spikekg.kg import TripleStore
from spikekg.synth import family_tree, geography_graph, random_graph

# seed 0, depth 2: founders person_000/001 have children 002, 004, 006 whose
# children are {008, 009}, {010, 011} and {012}
FAMILY_DEPTH2_GRANDCHILDREN = ["person_008", "person_009", "person_010", "person_011", "person_012"]


def labels(store, split):
    return sorted(store.labelled(t) for t in store.split(split))


def all_triples(store):
    return np.concatenate([store.train, store.valid, store.test])


def assert_store_invariants(store: TripleStore):
    everything = all_triples(store)
    codes = store.encode(everything)
    # splits are disjoint and the true index is exactly their union
    assert len(np.unique(codes)) == len(codes)
    assert store.num_true == len(codes)
    assert everything.min() >= 0
    assert everything[:, [0, 2]].max() < store.num_entities
    assert everything[:, 1].max() < store.num_relations


def test_geography_is_deterministic():
    a, b = geography_graph(0), geography_graph(0)
    assert a.vocab == b.vocab
    for name in ("train", "valid", "test"):
        assert np.array_equal(a.split(name), b.split(name))


def test_geography_differs_across_seeds():
    assert labels(geography_graph(0), "train") != labels(geography_graph(1), "train")


def test_geography_shape_and_invariants():
    g = geography_graph(0)
    assert g.num_entities == 20 and g.vocab.relations == ["borders", "locatedIn"]
    assert_store_invariants(g)
    every = all_triples(g)
    # every state sits in exactly one region and every region holds a state
    located = every[every[:, 1] == 1]
    assert sorted(located[:, 0].tolist()) == list(range(16))
    assert set(located[:, 2].tolist()) == {16, 17, 18, 19}


def test_symmetric_borders_have_reverse():
    g = geography_graph(0, symmetric_borders=True)
    assert_store_invariants(g)
    borders = {(s, o) for s, p, o in all_triples(g).tolist() if p == 0}
    assert borders and all((o, s) in borders for s, o in borders)


def test_default_borders_are_oriented():
    g = geography_graph(0)
    borders = {(s, o) for s, p, o in all_triples(g).tolist() if p == 0}
    assert not any((o, s) in borders for s, o in borders)


def test_family_depth_two_closure():
    f = family_tree(2, seed=0)
    founders = ["person_000", "person_001"]
    expected = sorted((a, "grandparentOf", c) for a in founders for c in FAMILY_DEPTH2_GRANDCHILDREN)
    assert sorted(labels(f, "valid") + labels(f, "test")) == expected


def test_family_closure_matches_parent_links():
    f = family_tree(4, seed=3)
    parents = {}
    for s, p, o in f.train.tolist():
        if p == 0:
            parents.setdefault(o, set()).add(s)
    expected = set()
    for child, ps in parents.items():
        for p in ps:
            for g in parents.get(p, ()):
                expected.add((g, 2, child))
    got = {tuple(t) for t in np.concatenate([f.valid, f.test]).tolist()}
    assert got == expected


@pytest.mark.parametrize("seed", range(5))
def test_family_is_acyclic(seed):
    f = family_tree(4, seed=seed)
    children = {}
    for s, p, o in f.train.tolist():
        if p == 0:
            children.setdefault(s, set()).add(o)

    def descendants(n):
        seen, stack = set(), [n]
        while stack:
            for c in children.get(stack.pop(), ()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    assert all(n not in descendants(n) for n in range(f.num_entities))
    assert_store_invariants(f)


def test_family_is_deterministic():
    a, b = family_tree(3, seed=7), family_tree(3, seed=7)
    for name in ("train", "valid", "test"):
        assert labels(a, name) == labels(b, name)


def test_family_depth_validation():
    with pytest.raises(ValueError):
        family_tree(1)


def test_random_graph_invariants():
    g = random_graph(50, 4, 300, seed=0)
    assert_store_invariants(g)
    assert len(all_triples(g)) == 300
