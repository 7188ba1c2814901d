"""Small deterministic knowledge graphs for tests and desk-scale experiments.

These are synthetic analogues, not reconstructions of any published data.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .kg import Triple, TripleStore, Vocabulary


def _split(triples, rng, fractions=(0.8, 0.1, 0.1)):
    order = rng.permutation(len(triples))
    n_train = int(round(fractions[0] * len(triples)))
    n_valid = int(round(fractions[1] * len(triples)))
    pick = [triples[i] for i in order]
    return pick[:n_train], pick[n_train : n_train + n_valid], pick[n_train + n_valid :]


def geography_graph(seed: int = 0, n_states: int = 16, inverse: bool = True,
                    symmetric_borders: bool = False) -> TripleStore:
    """States scattered in a unit square plus four quadrant regions.

    ``borders`` links states sharing a Delaunay edge and ``locatedIn`` links
    each state to its quadrant region; quadrants are cut at the median
    coordinates so no region is empty.  By default each border is stored once,
    from the western to the eastern state; ``symmetric_borders=True`` stores
    both directions.  A translational score can never rank both directions of
    a symmetric pair above the self-loop candidate, so the symmetric variant
    caps the reachable MRR below 0.9.  Triples are split 80/10/10 at random.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n_states, 2))
    vocab = Vocabulary(
        [f"state_{i:02d}" for i in range(n_states)] + ["region_NW", "region_NE", "region_SW", "region_SE"],
        ["borders", "locatedIn"],
    ).freeze()
    borders, located_in = 0, 1
    edges = set()
    for simplex in Delaunay(pts).simplices:
        for a in range(3):
            for b in range(a + 1, 3):
                i, j = sorted((int(simplex[a]), int(simplex[b])))
                edges.add((i, j))
    triples = []
    for i, j in sorted(edges):
        west, east = (i, j) if pts[i, 0] <= pts[j, 0] else (j, i)
        triples.append(Triple(west, borders, east))
        if symmetric_borders:
            triples.append(Triple(east, borders, west))
    mx, my = np.median(pts, axis=0)
    for i, (x, y) in enumerate(pts):
        quadrant = (0 if y >= my else 2) + (0 if x < mx else 1)
        triples.append(Triple(i, located_in, n_states + quadrant))
    train, valid, test = _split(triples, rng)
    return TripleStore(vocab, train, valid, test, inverse=inverse)


def family_tree(depth: int = 3, seed: int = 0, max_children: int = 3, inverse: bool = True) -> TripleStore:
    """A random descendant tree of one founding couple, ``depth`` generations deep.

    Every descendant except the youngest generation marries an outsider.
    Train holds ``parentOf`` and ``marriedTo`` (both directions); the two-hop
    ``grandparentOf`` closure is split evenly between valid and test.
    """
    if depth < 2:
        raise ValueError("depth must be >= 2")
    rng = np.random.default_rng(seed)
    vocab = Vocabulary(relations=["parentOf", "marriedTo", "grandparentOf"])
    parent_of, married_to, grandparent_of = 0, 1, 2
    counter = iter(range(10**9))

    def person():
        return vocab.entity_id(f"person_{next(counter):03d}")

    train = []
    generation = [(person(), person())]
    for g in range(depth):
        nxt = []
        for a, b in generation:
            train += [Triple(a, married_to, b), Triple(b, married_to, a)]
            for _ in range(int(rng.integers(1, max_children + 1))):
                child = person()
                train += [Triple(a, parent_of, child), Triple(b, parent_of, child)]
                if g < depth - 1:
                    nxt.append((child, person()))
        generation = nxt
    vocab.freeze()
    children = {}
    for s, p, o in train:
        if p == parent_of:
            children.setdefault(s, []).append(o)
    grand = sorted({Triple(a, grandparent_of, c) for a, kids in children.items() for b in kids for c in children.get(b, [])})
    order = rng.permutation(len(grand))
    half = len(grand) // 2
    valid = [grand[i] for i in order[:half]]
    test = [grand[i] for i in order[half:]]
    return TripleStore(vocab, train, valid, test, inverse=inverse)


def random_graph(num_entities: int, num_relations: int, num_triples: int, seed: int = 0,
                 inverse: bool = True) -> TripleStore:
    """Uniformly random distinct triples, split 80/10/10 (used for scale smoke tests)."""
    rng = np.random.default_rng(seed)
    codes = np.unique(rng.integers(0, num_entities * num_relations * num_entities, size=int(num_triples * 1.1)))
    codes = rng.permutation(codes)[:num_triples]
    s, rest = np.divmod(codes, num_relations * num_entities)
    p, o = np.divmod(rest, num_entities)
    vocab = Vocabulary([f"e{i}" for i in range(num_entities)], [f"r{i}" for i in range(num_relations)]).freeze()
    triples = [Triple(*t) for t in np.stack([s, p, o], axis=1).tolist()]
    train, valid, test = _split(triples, rng)
    return TripleStore(vocab, train, valid, test, inverse=inverse)
