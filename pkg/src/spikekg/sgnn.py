"""Spiking relational graph convolution on top of time-to-first-spike embeddings.

Enriched neuron i of entity n integrates the initial spikes of n's
neighbours, each routed through a relation-specific matrix and averaged
over the neighbour set of that relation:

    du_i/dt = (1/tau_s) sum_p sum_{j in N_n^p} (1/|N_n^p|) sum_c W_p[i, c] kappa(t, t_{j,c})

so the enriched layer is again a first-crossing problem, just with a larger,
entity-specific input set.  The convolution matrices are frozen by default;
training moves the initial embeddings instead.
"""
from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .kg import TripleStore
from .lif import NeuronParams, first_spike_grads, first_spikes
from .model import EmbeddingModel
from .ttfs import TtfsConfig, TtfsModel


class NoInboundEvidence(ValueError):
    pass


@dataclass
class SgnnConfig(TtfsConfig):
    self_loop: bool = True
    freeze_conv: bool = True
    # conv weights ~ U[0, 2 * conv_scale * u_th * tau_s / (dim * mean relation groups)]
    conv_scale: float = 10.0


@dataclass
class SpikeEfficiency:
    # spikes arriving strictly before the last enriched spike of their target
    before_last: float
    # spikes inside the causal set of at least one enriched crossing
    causal_any: float
    # mean over enriched neurons of the fraction of inputs in its causal set
    causal_mean: float
    total_spikes: int


class SgnnModel(EmbeddingModel):
    model_type = "sgnn"

    def __init__(self, store: TripleStore, params: NeuronParams | None = None,
                 config: SgnnConfig | None = None, seed: int = 0, edges=None):
        self.params = params or NeuronParams()
        self.config = config or SgnnConfig()
        c = self.config
        self.num_entities = store.num_entities
        self.num_relations = store.num_relations
        self.inverse = store.inverse
        self.base = TtfsModel(store.num_entities, store.num_relations, self.params, c, seed=seed)
        self.edges = np.array(store.train if edges is None else edges, dtype=np.int64).reshape(-1, 3)
        self._build_sources()

        rng = np.random.default_rng([seed, 1])
        self.self_rel = store.num_relation_ids
        num_mats = self.self_rel + 1
        mean_groups = max(1.0, float(self.group_count.mean()) + float(c.self_loop))
        hi = 2.0 * c.conv_scale * self.params.u_th * self.params.tau_s / (c.dim * mean_groups)
        self.conv = rng.uniform(0.0, hi, size=(num_mats, c.dim, c.dim))
        self.deltas = rng.normal(0.0, c.delta_std, size=(self.num_relations, c.dim))

    # ----------------------------------------------------------------- graph
    def _build_sources(self):
        R = self.num_relations
        adj = defaultdict(set)
        for s, p, o in self.edges.tolist():
            adj[(s, p)].add(o)
            if self.inverse:
                adj[(o, p + R)].add(s)
        per_entity = defaultdict(list)
        for (n, p), nbrs in sorted(adj.items()):
            norm = 1.0 / len(nbrs)
            per_entity[n].extend((j, p, norm) for j in sorted(nbrs))
        self._sources = [per_entity.get(n, []) for n in range(self.num_entities)]
        # mean aggregation: each relation group adds one matrix's worth of drive
        groups = defaultdict(set)
        for n, p in adj:
            groups[n].add(p)
        self.group_count = np.array([len(groups[n]) for n in range(self.num_entities)] or [0], dtype=float)

    def sources(self, n: int, self_loop: bool | None = None):
        """(neighbour, relation id, 1/|N_n^p|) triples feeding entity ``n``."""
        use_self = self.config.self_loop if self_loop is None else self_loop
        src = list(self._sources[n])
        if use_self:
            src.append((n, self.num_relation_ids_with_self - 1, 1.0))
        return src

    @property
    def num_relation_ids_with_self(self) -> int:
        return self.conv.shape[0]

    @staticmethod
    def sources_from_facts(facts, x: int, num_relations: int, inverse: bool = True):
        """Neighbour sources of an unseen entity ``x`` built from its facts only."""
        groups = defaultdict(set)
        for s, p, o in (tuple(int(v) for v in f) for f in facts):
            if s == x and o == x:
                raise ValueError("a fact may not link the unseen entity to itself")
            if s == x:
                groups[p].add(o)
            elif o == x:
                if inverse:
                    groups[p + num_relations].add(s)
            else:
                raise ValueError(f"fact {(s, p, o)} does not mention entity {x}")
        out = []
        for p in sorted(groups):
            norm = 1.0 / len(groups[p])
            out.extend((j, p, norm) for j in sorted(groups[p]))
        return out

    # --------------------------------------------------------------- params
    def parameters(self) -> dict:
        out = {"weights": self.base.weights, "deltas": self.deltas}
        if not self.config.freeze_conv:
            out["conv"] = self.conv
        return out

    def state(self) -> dict:
        return {
            "input_times": self.base.input_times,
            "weights": self.base.weights,
            "deltas": self.deltas,
            "conv": self.conv,
            "edges": self.edges.astype(float),
        }

    def load_state(self, state: dict) -> None:
        self.base.input_times = np.array(state["input_times"], dtype=float)
        self.base.weights = np.array(state["weights"], dtype=float)
        self.deltas = np.array(state["deltas"], dtype=float)
        self.conv = np.array(state["conv"], dtype=float)
        self.edges = np.array(state["edges"], dtype=np.int64).reshape(-1, 3)
        self._build_sources()

    def conv_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.conv).tobytes()).hexdigest()

    @property
    def t_max(self) -> float:
        return self.base.t_max + 10.0 * self.params.tau_s

    # -------------------------------------------------------------- forward
    def _pack(self, source_lists):
        """Pad per-entity source lists into arrays (U, S)."""
        S = max(len(s) for s in source_lists)
        U = len(source_lists)
        ent = np.zeros((U, S), dtype=np.int64)
        rel = np.zeros((U, S), dtype=np.int64)
        norm = np.zeros((U, S))
        for u, src in enumerate(source_lists):
            if src:
                a = np.array(src, dtype=float)
                ent[u, : len(src)] = a[:, 0]
                rel[u, : len(src)] = a[:, 1]
                norm[u, : len(src)] = a[:, 2]
        return ent, rel, norm

    def _enrich(self, source_lists):
        if any(len(s) == 0 for s in source_lists):
            raise NoInboundEvidence("no inbound evidence: entity has no neighbours and self-loop is off")
        N = self.config.dim
        ent, rel, norm = self._pack(source_lists)
        U, S = ent.shape
        base_ids, inv = np.unique(ent, return_inverse=True)
        inv = inv.reshape(U, S)
        base_t, base_cache = self.base.forward(base_ids)
        base_ok = base_cache[1].crossed.reshape(len(base_ids), N)
        present = norm > 0
        live = base_ok[inv] & present[..., None]  # (U, S, N_in)
        t_in = np.where(live, base_t[inv], np.inf)
        # W[u, i, s, c] = conv[rel[u, s], i, c] * norm[u, s]
        W = self.conv[rel].transpose(0, 2, 1, 3) * norm[:, None, :, None]
        W = np.where(live[:, None, :, :], W, 0.0)
        w_rows = W.reshape(U * N, S * N)
        t_rows = np.repeat(t_in.reshape(U, 1, S * N), N, axis=1).reshape(U * N, S * N)
        res = first_spikes(w_rows, t_rows, self.params, t_max=self.t_max)
        cache = dict(ent=ent, rel=rel, norm=norm, inv=inv, base_ids=base_ids, base_cache=base_cache,
                     live=live, w_rows=w_rows, t_rows=t_rows, res=res, base_t=base_t)
        return res.times.reshape(U, N), cache

    def forward(self, ids):
        ids = np.asarray(ids)
        return self._enrich([self.sources(int(n)) for n in ids])

    def enrich(self, n: int, self_loop: bool | None = None) -> np.ndarray:
        if not 0 <= n < self.num_entities:
            raise IndexError(f"entity id {n} out of range")
        return self._enrich([self.sources(n, self_loop)])[0][0]

    def initial_embeddings(self) -> np.ndarray:
        return self.base.embeddings()

    def silent_fraction(self, cache) -> float:
        return float(1.0 - cache["base_cache"][1].crossed.mean())

    def backward(self, ids, cache, grad_times):
        U, N = grad_times.shape
        S = cache["ent"].shape[1]
        res = cache["res"]
        dw, dt = first_spike_grads(cache["w_rows"], cache["t_rows"], self.params, res)
        g = grad_times.reshape(U * N, 1)
        # gradient on each input spike time, summed over the enriched neurons
        g_tin = (dt * g).reshape(U, N, S, N).sum(axis=1)
        g_tin = np.where(cache["live"], g_tin, 0.0)
        g_base = np.zeros_like(cache["base_t"])
        np.add.at(g_base, cache["inv"].ravel(), g_tin.reshape(U * S, N))
        grads, penalty = self.base.backward(cache["base_ids"], cache["base_cache"], g_base)
        if not self.config.freeze_conv:
            gw = (dw * g).reshape(U, N, S, N) * cache["norm"][:, None, :, None]
            gw = np.where(cache["live"][:, None, :, :], gw, 0.0).transpose(0, 2, 1, 3)  # (U, S, i, c)
            g_conv = np.zeros_like(self.conv)
            np.add.at(g_conv, cache["rel"].ravel(), gw.reshape(U * S, N, N))
            grads["conv"] = g_conv
        return grads, penalty

    # ------------------------------------------------------------- analysis
    def inductive_embed(self, facts, x: int) -> np.ndarray:
        """Embed an entity unseen during training from the facts that mention it."""
        facts = list(facts)
        if not facts:
            raise ValueError("inductive embedding needs at least one fact")
        src = self.sources_from_facts(facts, x, self.num_relations, self.inverse)
        for j, _, _ in src:
            if not 0 <= j < self.num_entities:
                raise IndexError(f"fact references unknown entity {j}")
        return self._enrich([src])[0][0]

    def spike_efficiency(self, ids=None) -> SpikeEfficiency:
        """How many initial-layer spikes the enriched layer actually waits for.

        Each distinct initial spike (neighbour j, neuron c) feeding an entity
        is counted once per target entity.
        """
        ids = np.arange(self.num_entities) if ids is None else np.asarray(ids)
        ids = np.array([n for n in ids if self.sources(int(n))], dtype=np.int64)
        times, cache = self.forward(ids)
        res = cache["res"]
        N = self.config.dim
        crossed = res.crossed.reshape(len(ids), N)
        base_t = cache["base_t"]
        base_ok = cache["base_cache"][1].crossed.reshape(len(cache["base_ids"]), N)
        total = before = causal_any = 0
        causal_fracs = []
        for u in range(len(ids)):
            nbr = np.unique(cache["inv"][u][cache["norm"][u] > 0])
            spikes = base_t[nbr][base_ok[nbr]]
            if spikes.size == 0:
                continue
            total += spikes.size
            hit = times[u][crossed[u]]
            if hit.size == 0:
                continue
            before += int((spikes < hit.max()).sum())
            causal_any += int((spikes <= hit.max()).sum())
            causal_fracs.extend(((spikes[None, :] <= hit[:, None]).mean(axis=1)).tolist())
        if total == 0:
            return SpikeEfficiency(0.0, 0.0, 0.0, 0)
        return SpikeEfficiency(
            before_last=before / total,
            causal_any=causal_any / total,
            causal_mean=float(np.mean(causal_fracs)) if causal_fracs else 0.0,
            total_spikes=total,
        )

    def raster_rows(self):
        """(entity, layer, neuron, time) for every spike of both layers."""
        init = self.base.forward(np.arange(self.num_entities))
        init_t = init[0]
        init_ok = init[1][1].crossed.reshape(init_t.shape)
        rows = []
        ids = [n for n in range(self.num_entities) if self.sources(n)]
        enr_t, enr_cache = self.forward(np.array(ids, dtype=np.int64)) if ids else (np.empty((0, 0)), None)
        for n in range(self.num_entities):
            rows += [(n, "initial", i, float(t)) for i, t in enumerate(init_t[n]) if init_ok[n, i]]
        if ids:
            ok = enr_cache["res"].crossed.reshape(enr_t.shape)
            for u, n in enumerate(ids):
                rows += [(n, "enriched", i, float(t)) for i, t in enumerate(enr_t[u]) if ok[u, i]]
        return rows
