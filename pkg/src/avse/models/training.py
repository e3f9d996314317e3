"""Adam training loop with validation-based early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import AdamState, adam_update
from ..errors import DivergenceError, ValidationError
from .networks import GenerativeModel
from .objective import Batch, elbo, evaluate_objective

log = logging.getLogger(__name__)


@dataclass
class EarlyStopping:
    """Tracks the best validation score; ``update`` returns True when training should stop."""

    patience: int = 20
    best_score: float = -np.inf
    best_epoch: int = 0
    since_best: int = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best_score:
            self.best_score, self.best_epoch, self.since_best = score, epoch, 0
        else:
            self.since_best += 1
        return self.since_best >= self.patience


@dataclass
class TrainingResult:
    model: GenerativeModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid: float = float("nan")
    epochs_run: int = 0


def train(m: GenerativeModel, train_set: Batch, valid_set: Batch, epochs: int = 500,
          patience: int = 20, seed: int = 0, batch_size: int = 128,
          step_size: float = 1e-4) -> TrainingResult:
    """Maximize the objective with Adam; return the best-validation snapshot.

    ``history[0]`` holds the objectives of the initial parameters (epoch 0).
    """
    if len(train_set) == 0 or len(valid_set) == 0:
        raise ValidationError("training and validation sets must be non-empty")
    params = {k: v.copy() for k, v in m.named_params().items()}
    state = AdamState(step_size=step_size)
    stopper = EarlyStopping(patience)
    valid_seed = (seed, 10**6)

    def scores(model, epoch):
        try:
            tr = evaluate_objective(model, train_set, (seed, 10**6 + 1))
            va = evaluate_objective(model, valid_set, valid_seed)
        except DivergenceError as exc:
            raise DivergenceError(f"epoch {epoch}: {exc}") from exc
        return tr, va

    tr0, va0 = scores(m, 0)
    history = [{"epoch": 0, "train": tr0, "valid": va0}]
    stopper.update(0, va0)
    best = m.with_params({k: v.copy() for k, v in params.items()})
    epoch = 0
    for epoch in range(1, epochs + 1):
        order = np.random.default_rng((seed, epoch)).permutation(len(train_set))
        for b, start in enumerate(range(0, len(order), batch_size)):
            batch = train_set.subset(order[start : start + batch_size])
            current = m.with_params(params)
            try:
                _, grads = elbo(current, batch, (seed, epoch, b))
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}") from exc
            params, state = adam_update(params, grads, state, ascent=True)
        current = m.with_params(params)
        tr, va = scores(current, epoch)
        history.append({"epoch": epoch, "train": tr, "valid": va})
        log.debug("epoch %d train %.4f valid %.4f", epoch, tr, va)
        stop = stopper.update(epoch, va)
        if stopper.best_epoch == epoch:
            best = current
        if stop:
            break
    return TrainingResult(best, history, stopper.best_epoch, stopper.best_score, epoch)
