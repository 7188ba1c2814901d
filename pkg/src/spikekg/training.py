"""Mini-batch training loop shared by all embedding schemes."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .evaluation import evaluate
from .kg import TripleStore
from .optim import Adam

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Schedule:
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 1
    eval_split: str = "valid"
    eval_mode: str = "filtered"
    # clip each gradient entry to [-grad_clip, grad_clip]; 0 disables
    grad_clip: float = 0.0
    # worker threads for the periodic evaluation
    threads: int = 1


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    valid_mrr: float

    def csv(self) -> str:
        return f"{self.epoch},{self.loss!r},{self.valid_mrr!r}"


def train(model, store: TripleStore, schedule: Schedule | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None):
    """Train ``model`` in place on ``store.train``; returns the per-epoch history.

    The data order, negatives and therefore the final parameters are fully
    determined by ``schedule.seed``.
    """
    sched = schedule or Schedule()
    rng = np.random.default_rng(sched.seed)
    opt = Adam(model.parameters(), lr=sched.lr, clip=sched.grad_clip or None)
    data = store.train
    if len(data) == 0:
        raise ValueError("store has no training triples")
    can_eval = sched.eval_every > 0 and len(store.split(sched.eval_split)) > 0
    history = []
    for epoch in range(1, sched.epochs + 1):
        perm = rng.permutation(len(data))
        total, batches = 0.0, 0
        for start in range(0, len(data), sched.batch_size):
            batch = data[perm[start : start + sched.batch_size]]
            loss, grads = model.loss_batch(batch, store, rng)
            if not math.isfinite(loss) or any(
                not np.all(np.isfinite(g[1] if isinstance(g, tuple) else g)) for g in grads.values()
            ):
                raise TrainingDiverged(f"non-finite loss or gradient at epoch {epoch}, batch {batches}")
            opt.step(grads)
            total += loss
            batches += 1
        mrr = float("nan")
        if can_eval and (epoch % sched.eval_every == 0 or epoch == sched.epochs):
            mrr = evaluate(model.scorer(), store, sched.eval_split, sched.eval_mode,
                           threads=sched.threads).mrr
        rec = EpochRecord(epoch, total / batches, mrr)
        history.append(rec)
        logger.info("epoch %d loss %.5f %s mrr %.4f", epoch, rec.loss, sched.eval_split, mrr)
        if on_epoch is not None:
            on_epoch(rec)
    return history
