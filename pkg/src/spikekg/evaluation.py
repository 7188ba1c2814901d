"""Link-prediction ranking: raw/filtered ranks, MRR and Hits@k.

A scorer is any callable ``scorer(s, p, o)`` taking broadcastable integer
arrays and returning distances (lower is more plausible).
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kg import TripleStore

HITS_AT = (1, 3, 10)
SLOTS = ("subject", "object")


@dataclass
class RankingReport:
    mrr: float
    hits_at: dict
    mean_rank: float
    ranks: np.ndarray  # shape (Q, 2): subject-slot and object-slot ranks
    mode: str
    triples: np.ndarray = field(repr=False, default=None)

    def to_text(self) -> str:
        lines = [
            f"mode = {self.mode}",
            f"queries = {self.ranks.size}",
            f"mrr = {self.mrr:.6f}",
            f"mean_rank = {self.mean_rank:.6f}",
        ]
        lines += [f"hits@{k} = {v:.6f}" for k, v in self.hits_at.items()]
        return "\n".join(lines)

    def write_csv(self, path, store: TripleStore | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "predicate", "object", "slot", "rank"])
            for t, pair in zip(self.triples, self.ranks):
                names = store.labelled(t) if store is not None else tuple(int(x) for x in t)
                for slot, r in zip(SLOTS, pair):
                    w.writerow([*names, slot, repr(float(r))])


def _check_mode(mode):
    if mode not in ("raw", "filtered"):
        raise ValueError(f"mode must be 'raw' or 'filtered', got {mode!r}")


def _candidate_scores(scorer, queries: np.ndarray, slot: str, num_entities: int) -> np.ndarray:
    cand = np.arange(num_entities)[None, :]
    s = queries[:, 0:1]
    p = queries[:, 1:2]
    o = queries[:, 2:3]
    if slot == "subject":
        return np.asarray(scorer(cand, p, o), dtype=float)
    return np.asarray(scorer(s, p, cand), dtype=float)


def _filter_mask(store: TripleStore, queries: np.ndarray, slot: str) -> np.ndarray:
    """True where a candidate forms some other known-true triple."""
    mask = np.zeros((len(queries), store.num_entities), dtype=bool)
    for i, (s, p, o) in enumerate(queries.tolist()):
        if slot == "subject":
            known, true = store.true_subjects(p, o), s
        else:
            known, true = store.true_objects(s, p), o
        mask[i, known] = True
        mask[i, true] = False
    return mask


def _ranks_from_scores(scores: np.ndarray, true_idx: np.ndarray, excluded: np.ndarray | None) -> np.ndarray:
    rows = np.arange(len(scores))
    true_score = scores[rows, true_idx][:, None]
    better = scores < true_score
    ties = scores == true_score
    ties[rows, true_idx] = False
    if excluded is not None:
        better &= ~excluded
        ties &= ~excluded
    return 1.0 + better.sum(axis=1) + ties.sum(axis=1) / 2.0


def rank_queries(scorer, queries, slot: str, store: TripleStore, mode: str = "filtered") -> np.ndarray:
    """Ranks of the true entity for a batch of queries in one slot."""
    _check_mode(mode)
    if slot not in SLOTS:
        raise ValueError(f"slot must be one of {SLOTS}, got {slot!r}")
    q = np.asarray(queries, dtype=np.int64).reshape(-1, 3)
    scores = _candidate_scores(scorer, q, slot, store.num_entities)
    true_idx = q[:, 0] if slot == "subject" else q[:, 2]
    excluded = _filter_mask(store, q, slot) if mode == "filtered" else None
    return _ranks_from_scores(scores, true_idx, excluded)


def rank(scorer, query, slot: str, store: TripleStore, mode: str = "filtered") -> float:
    q = np.asarray(query, dtype=np.int64)
    if np.any(q[[0, 2]] >= store.num_entities) or np.any(q < 0):
        raise ValueError(f"query {tuple(q)} references unknown entities")
    return float(rank_queries(scorer, q[None, :], slot, store, mode)[0])


def report_from_ranks(ranks: np.ndarray, mode: str, triples=None) -> RankingReport:
    ranks = np.asarray(ranks, dtype=float)
    flat = ranks.ravel()
    return RankingReport(
        mrr=float(np.mean(1.0 / flat)),
        hits_at={k: float(np.mean(flat <= k)) for k in HITS_AT},
        mean_rank=float(np.mean(flat)),
        ranks=ranks,
        mode=mode,
        triples=triples,
    )


def evaluate(
    scorer,
    store: TripleStore,
    split: str = "test",
    mode: str = "filtered",
    chunk: int = 256,
    threads: int = 1,
    triples=None,
) -> RankingReport:
    """Rank both slots of every triple in ``split`` (or in ``triples``)."""
    _check_mode(mode)
    data = store.split(split) if triples is None else np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(data) == 0:
        raise ValueError(f"split {split!r} is empty")
    # fix chunk boundaries independently of thread count so results never vary
    chunk = max(1, min(chunk, max(1, 2**20 // max(store.num_entities, 1))))
    blocks = [data[i : i + chunk] for i in range(0, len(data), chunk)]

    def work(block):
        return np.stack([rank_queries(scorer, block, slot, store, mode) for slot in SLOTS], axis=1)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    return report_from_ranks(np.concatenate(parts), mode, data)
