"""Scoring and margin-ranking loss shared by every spike embedding scheme.

A concrete model maps entity ids to spike-time vectors through
``forward(ids) -> (times, cache)`` and pushes gradients back through
``backward(ids, cache, grad_times) -> (grads, penalty)``.  Relation offsets
live in ``self.deltas`` and are handled here.
"""
from __future__ import annotations

import numpy as np

from .kg import TripleStore, negative_batch


def score(t_s, t_o, delta):
    """L1 distance between spike-time differences and a relation offset."""
    t_s = np.asarray(t_s, dtype=float)
    t_o = np.asarray(t_o, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if t_s.shape[-1] != t_o.shape[-1] or t_s.shape[-1] != delta.shape[-1]:
        raise ValueError(f"length mismatch: {t_s.shape[-1]}, {t_o.shape[-1]}, {delta.shape[-1]}")
    return np.abs(t_s - t_o - delta).sum(axis=-1)


class SilentNetworkError(RuntimeError):
    """Every neuron feeding the loss is silent, so no gradient can flow."""


class EmbeddingModel:
    model_type = "base"
    deltas: np.ndarray
    num_entities: int

    # subclasses fill these in
    def forward(self, ids: np.ndarray):
        raise NotImplementedError

    def backward(self, ids: np.ndarray, cache, grad_times: np.ndarray):
        raise NotImplementedError

    def parameters(self) -> dict:
        raise NotImplementedError

    def state(self) -> dict:
        """Every array needed to rebuild the model, trainable or not."""
        raise NotImplementedError

    def silent_fraction(self, cache) -> float:
        return 0.0

    def embed(self, n: int) -> np.ndarray:
        if not 0 <= n < self.num_entities:
            raise IndexError(f"entity id {n} out of range")
        return self.forward(np.array([n]))[0][0]

    def embeddings(self) -> np.ndarray:
        return self.forward(np.arange(self.num_entities))[0]

    def scorer(self):
        """Freeze current embeddings into a ``scorer(s, p, o)`` closure."""
        emb = self.embeddings()
        deltas = self.deltas.copy()

        def _score(s, p, o):
            s, p, o = np.broadcast_arrays(np.asarray(s), np.asarray(p), np.asarray(o))
            return np.abs(emb[s] - emb[o] - deltas[p]).sum(axis=-1)

        return _score

    def sample_negatives(self, positives, store: TripleStore, rng: np.random.Generator):
        neg, _ = negative_batch(positives, self.config.negatives, store, rng)
        return neg

    def loss_batch(self, positives, store: TripleStore | None = None, rng=None, negatives=None):
        """Margin ranking loss and row-sparse gradients for one batch.

        ``negatives`` (B, k, 3) may be given explicitly; otherwise they are
        drawn from ``store`` with ``rng``.
        """
        pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
        if negatives is None:
            negatives = self.sample_negatives(pos, store, rng)
        neg = np.asarray(negatives, dtype=np.int64)
        B, k = neg.shape[:2]
        margin = self.config.margin

        ids, inv = np.unique(np.concatenate([pos[:, [0, 2]].ravel(), neg[..., [0, 2]].ravel()]), return_inverse=True)
        ps, po = inv[: 2 * B].reshape(B, 2).T
        ns, no = inv[2 * B :].reshape(B, k, 2).transpose(2, 0, 1)
        times, cache = self.forward(ids)
        if self.silent_fraction(cache) >= 1.0:
            raise SilentNetworkError(
                "all neurons feeding this batch are silent; raise the input weights or the penalty"
            )

        diff_pos = times[ps] - times[po] - self.deltas[pos[:, 1]]
        diff_neg = times[ns] - times[no] - self.deltas[neg[..., 1]]
        d_pos = np.abs(diff_pos).sum(axis=-1)
        d_neg = np.abs(diff_neg).sum(axis=-1)
        hinge = margin + d_pos[:, None] - d_neg
        active = hinge > 0
        loss = float(np.where(active, hinge, 0.0).sum() / (B * k))

        coef = active / (B * k)
        g_pos = np.sign(diff_pos) * coef.sum(axis=1)[:, None]
        g_neg = -np.sign(diff_neg) * coef[..., None]
        grad_t = np.zeros_like(times)
        grad_d = np.zeros_like(self.deltas)
        np.add.at(grad_t, ps, g_pos)
        np.add.at(grad_t, po, -g_pos)
        np.add.at(grad_d, pos[:, 1], -g_pos)
        np.add.at(grad_t, ns.ravel(), g_neg.reshape(-1, g_neg.shape[-1]))
        np.add.at(grad_t, no.ravel(), -g_neg.reshape(-1, g_neg.shape[-1]))
        np.add.at(grad_d, neg[..., 1].ravel(), -g_neg.reshape(-1, g_neg.shape[-1]))

        grads, penalty = self.backward(ids, cache, grad_t)
        rel_rows = np.unique(np.concatenate([pos[:, 1], neg[..., 1].ravel()]))
        grads["deltas"] = (rel_rows, grad_d[rel_rows])
        return loss + penalty, grads
