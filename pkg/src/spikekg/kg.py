"""Triples, vocabularies, splits and negative sampling."""
from __future__ import annotations

import os
from collections import defaultdict
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Triple",
    "Vocabulary",
    "TripleStore",
    "ParseError",
    "VocabularyError",
    "load_triples",
    "load_dataset",
    "save_dataset",
    "negative_sample",
    "negative_batch",
    "neighbors",
]

SPLITS = ("train", "valid", "test")


class ParseError(ValueError):
    def __init__(self, path, line_no: int, line: str):
        super().__init__(f"{path}:{line_no}: expected 3 tab-separated fields, got {line!r}")
        self.line_no = line_no


class VocabularyError(KeyError):
    pass


class Triple(NamedTuple):
    subject: int
    predicate: int
    object: int


class Vocabulary:
    """Label <-> id maps for entities and relations, indexed by first appearance."""

    def __init__(self, entities: Iterable[str] = (), relations: Iterable[str] = (), frozen: bool = False):
        self.entities: list[str] = []
        self.relations: list[str] = []
        self._ent: dict[str, int] = {}
        self._rel: dict[str, int] = {}
        for e in entities:
            self._add(e, self.entities, self._ent)
        for r in relations:
            self._add(r, self.relations, self._rel)
        self.frozen = frozen

    @staticmethod
    def _add(label, labels, index):
        if label in index:
            raise ValueError(f"duplicate label {label!r}")
        index[label] = len(labels)
        labels.append(label)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def _lookup(self, label, labels, index, kind):
        try:
            return index[label]
        except KeyError:
            if self.frozen:
                raise VocabularyError(f"unknown {kind} label {label!r}") from None
            index[label] = len(labels)
            labels.append(label)
            return index[label]

    def entity_id(self, label: str) -> int:
        return self._lookup(label, self.entities, self._ent, "entity")

    def relation_id(self, label: str) -> int:
        return self._lookup(label, self.relations, self._rel, "relation")

    def has_entity(self, label: str) -> bool:
        return label in self._ent

    def has_relation(self, label: str) -> bool:
        return label in self._rel

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def copy(self, frozen: bool | None = None) -> "Vocabulary":
        return Vocabulary(self.entities, self.relations, self.frozen if frozen is None else frozen)

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and self.entities == other.entities
            and self.relations == other.relations
        )

    def __repr__(self):
        return f"Vocabulary({self.num_entities} entities, {self.num_relations} relations)"


def load_triples(path, vocab: Vocabulary | None = None) -> tuple[list[Triple], Vocabulary]:
    """Read a tab-separated ``subject<TAB>relation<TAB>object`` file."""
    if vocab is None:
        vocab = Vocabulary()
    triples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(path, line_no, line)
            s, p, o = fields
            # resolve in reading order so first appearance decides the index
            si = vocab.entity_id(s)
            pi = vocab.relation_id(p)
            oi = vocab.entity_id(o)
            triples.append(Triple(si, pi, oi))
    return triples, vocab


def _as_array(triples) -> np.ndarray:
    arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    arr.setflags(write=False)
    return arr


class TripleStore:
    """Immutable train/valid/test triples with filtering and adjacency indices.

    With ``inverse=True`` the adjacency also records reversed training edges
    under relation id ``p + R``.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        train: Sequence = (),
        valid: Sequence = (),
        test: Sequence = (),
        inverse: bool = True,
    ):
        self.vocab = vocab
        self.inverse = inverse
        self.num_entities = vocab.num_entities
        self.num_relations = vocab.num_relations
        self.train = _as_array(train)
        self.valid = _as_array(valid)
        self.test = _as_array(test)
        for name in SPLITS:
            arr = getattr(self, name)
            if arr.size and (
                arr.min() < 0
                or arr[:, [0, 2]].max() >= self.num_entities
                or arr[:, 1].max() >= self.num_relations
            ):
                raise ValueError(f"{name} split has ids outside the vocabulary")

        everything = np.concatenate([self.train, self.valid, self.test])
        self._true_codes = np.unique(self.encode(everything))
        self._true_codes.setflags(write=False)
        sp = defaultdict(set)
        po = defaultdict(set)
        for s, p, o in everything.tolist():
            sp[(s, p)].add(o)
            po[(p, o)].add(s)
        self._sp = {k: np.array(sorted(v), dtype=np.int64) for k, v in sp.items()}
        self._po = {k: np.array(sorted(v), dtype=np.int64) for k, v in po.items()}

        adj = defaultdict(set)
        R = self.num_relations
        for s, p, o in self.train.tolist():
            adj[(s, p)].add(o)
            if inverse:
                adj[(o, p + R)].add(s)
        self._adj = {k: tuple(sorted(v)) for k, v in adj.items()}

    @property
    def num_relation_ids(self) -> int:
        """Relation ids used by the adjacency (doubled with inverse edges)."""
        return 2 * self.num_relations if self.inverse else self.num_relations

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def encode(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=np.int64)
        E, R = self.num_entities, self.num_relations
        return (t[..., 0] * R + t[..., 1]) * E + t[..., 2]

    def is_true(self, triples) -> np.ndarray:
        """Vectorised membership test against train | valid | test."""
        codes = self.encode(triples)
        idx = np.searchsorted(self._true_codes, codes)
        idx = np.minimum(idx, len(self._true_codes) - 1)
        if len(self._true_codes) == 0:
            return np.zeros(codes.shape, dtype=bool)
        return self._true_codes[idx] == codes

    def __contains__(self, triple) -> bool:
        return bool(self.is_true(np.asarray(triple)))

    @property
    def num_true(self) -> int:
        return len(self._true_codes)

    def true_objects(self, s: int, p: int) -> np.ndarray:
        return self._sp.get((s, p), np.empty(0, dtype=np.int64))

    def true_subjects(self, p: int, o: int) -> np.ndarray:
        return self._po.get((p, o), np.empty(0, dtype=np.int64))

    def neighbors(self, n: int, p: int) -> list[int]:
        if not 0 <= n < self.num_entities:
            raise IndexError(f"entity id {n} out of range")
        if not 0 <= p < self.num_relation_ids:
            raise IndexError(f"relation id {p} out of range")
        return list(self._adj.get((n, p), ()))

    def adjacency(self) -> dict[tuple[int, int], tuple[int, ...]]:
        return dict(self._adj)

    def labelled(self, triple) -> tuple[str, str, str]:
        s, p, o = (int(x) for x in triple)
        return self.vocab.entities[s], self.vocab.relations[p], self.vocab.entities[o]

    def subsample(self, fraction: float, seed: int = 0) -> "TripleStore":
        """Random fraction of every split, re-indexed over the surviving labels."""
        rng = np.random.default_rng(seed)
        parts = {}
        for name in SPLITS:
            arr = self.split(name)
            keep = rng.random(len(arr)) < fraction
            parts[name] = arr[keep]
        vocab = Vocabulary()
        out = {}
        for name in SPLITS:
            out[name] = [
                Triple(vocab.entity_id(s), vocab.relation_id(p), vocab.entity_id(o))
                for s, p, o in (self.labelled(t) for t in parts[name])
            ]
        return TripleStore(vocab.freeze(), out["train"], out["valid"], out["test"], inverse=self.inverse)

    def __repr__(self):
        return (
            f"TripleStore({self.num_entities} entities, {self.num_relations} relations, "
            f"{len(self.train)}/{len(self.valid)}/{len(self.test)} train/valid/test)"
        )


def neighbors(store: TripleStore, n: int, p: int) -> list[int]:
    return store.neighbors(n, p)


def load_dataset(directory, inverse: bool = True) -> TripleStore:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from one directory."""
    vocab = Vocabulary()
    splits = {}
    for name in SPLITS:
        path = os.path.join(directory, f"{name}.txt")
        if os.path.exists(path):
            splits[name], vocab = load_triples(path, vocab)
        elif name == "train":
            raise FileNotFoundError(path)
        else:
            splits[name] = []
    return TripleStore(vocab.freeze(), splits["train"], splits["valid"], splits["test"], inverse=inverse)


def save_dataset(store: TripleStore, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for name in SPLITS:
        with open(os.path.join(directory, f"{name}.txt"), "w", encoding="utf-8") as fh:
            for t in store.split(name):
                fh.write("\t".join(store.labelled(t)) + "\n")


def negative_sample(t, store: TripleStore, rng: np.random.Generator, slot: str, max_tries: int = 100):
    """Corrupt one slot of ``t`` with a uniformly drawn entity.

    Returns ``(triple, ok)``; ``ok`` is False when ``max_tries`` draws all hit
    known-true triples, in which case the last candidate is returned.
    """
    if store.num_entities < 2:
        raise ValueError("negative sampling needs at least 2 entities")
    if slot not in ("subject", "object"):
        raise ValueError(f"slot must be 'subject' or 'object', got {slot!r}")
    s, p, o = (int(x) for x in t)
    cand = Triple(s, p, o)
    for _ in range(max_tries):
        e = int(rng.integers(store.num_entities))
        cand = Triple(e, p, o) if slot == "subject" else Triple(s, p, e)
        if cand not in store:
            return cand, True
    return cand, False


def negative_batch(positives, k: int, store: TripleStore, rng: np.random.Generator, max_tries: int = 100):
    """``k`` corruptions per positive; negative m replaces the subject for even m.

    Returns ``(negatives, ok)`` with shapes (B, k, 3) and (B, k).
    """
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    B = len(pos)
    neg = np.repeat(pos[:, None, :], k, axis=1)
    slot = np.where(np.arange(k) % 2 == 0, 0, 2)
    col = np.broadcast_to(slot, (B, k))
    pending = np.ones((B, k), dtype=bool)
    for _ in range(max_tries):
        bi, ki = np.nonzero(pending)
        if len(bi) == 0:
            break
        neg[bi, ki, col[bi, ki]] = rng.integers(store.num_entities, size=len(bi))
        pending[bi, ki] = store.is_true(neg[bi, ki])
    return neg, ~pending
