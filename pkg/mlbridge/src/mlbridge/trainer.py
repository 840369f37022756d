"""Reference trainer for the consolidation-plus-rehearsal update loss, at
toy scale.

The model is a softmax linear classifier on embedding features: small
enough to verify the loss algebra end to end, which is the point. The
update objective is

    total = task(new data) + beta * replay(anchor buffer) + ewc

with ewc = (lambda / 2) * sum_j F_j (theta_j - theta_j_old)^2 and the
Fisher diagonal F estimated as the mean squared log-likelihood gradient
over the anchor examples only. A naive ablation (beta = lambda = 0) runs
alongside for comparison.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from compass import dataio
from compass.core import CompassError, Dataset


class TrainerError(CompassError):
    pass


@dataclass(frozen=True)
class ToyTrainerSpec:
    recipe_path: str
    old_records: str
    old_embeddings: str
    new_records: str
    new_embeddings: str
    learning_rate: float = 0.5
    steps_per_epoch: int = 20
    seed: int = 0


@dataclass
class SoftmaxModel:
    """W: (d, C), b: (C,); parameters flatten in (W, b) order."""

    W: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, dim: int, n_classes: int, seed: int) -> "SoftmaxModel":
        rng = np.random.default_rng(seed)
        return cls(W=rng.normal(scale=0.01, size=(dim, n_classes)), b=np.zeros(n_classes))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b])

    def load_flat(self, theta: np.ndarray) -> None:
        d, c = self.W.shape
        self.W = theta[: d * c].reshape(d, c).copy()
        self.b = theta[d * c :].copy()

    def logits(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)

    def accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(X) == y))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_and_grad(model: SoftmaxModel, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient as a flat vector."""
    n = X.shape[0]
    probs = _softmax(model.logits(X))
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    grad_w = X.T @ delta / n
    grad_b = delta.mean(axis=0)
    return loss, np.concatenate([grad_w.ravel(), grad_b])


def ewc_loss_and_grad(theta: np.ndarray, theta_old: np.ndarray, fisher: np.ndarray, lam: float):
    diff = theta - theta_old
    loss = 0.5 * lam * float(np.sum(fisher * diff * diff))
    grad = lam * fisher * diff
    return loss, grad


def fisher_diagonal(model: SoftmaxModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Empirical Fisher: mean squared per-example log-likelihood gradient."""
    n = X.shape[0]
    probs = _softmax(model.logits(X))
    total = np.zeros(model.flat().size)
    d, c = model.W.shape
    for i in range(n):
        delta = probs[i].copy()
        delta[y[i]] -= 1.0
        g = np.concatenate([np.outer(X[i], delta).ravel(), delta])
        total += g * g
    return total / n


def _load_phase(records_path: str, embeddings_path: str):
    records = dataio.read_records(records_path)
    embeddings = dataio.read_embeddings(embeddings_path)
    ds = Dataset(tuple(records), embeddings)
    subjects = sorted({r.subject for r in records if r.subject is not None})
    if not subjects:
        raise TrainerError(f"{records_path} carries no subject labels")
    class_of = {s: i for i, s in enumerate(subjects)}
    y = np.array([class_of[r.subject] for r in records], dtype=np.int64)
    return ds, embeddings.data.astype(np.float64), y, subjects


def _train_phase(model, X, y, *, lr, steps, beta=0.0, lam=0.0,
                 anchors=None, theta_old=None, fisher=None):
    traces = {"task": [], "dar": [], "ewc": [], "total": []}
    for _ in range(steps):
        theta = model.flat()
        task, g_task = cross_entropy_and_grad(model, X, y)
        dar, g_dar = 0.0, np.zeros_like(theta)
        if anchors is not None:
            dar, g = cross_entropy_and_grad(model, anchors[0], anchors[1])
            if beta > 0.0:
                g_dar = g
        ewc, g_ewc = 0.0, np.zeros_like(theta)
        if theta_old is not None and lam > 0.0:
            ewc, g_ewc = ewc_loss_and_grad(theta, theta_old, fisher, lam)
        total = task + beta * dar + ewc
        traces["task"].append(task)
        traces["dar"].append(float(dar))
        traces["ewc"].append(ewc)
        traces["total"].append(total)
        grad = g_task + beta * g_dar + g_ewc
        model.load_flat(theta - lr * grad)
    return traces


def train_ecda_toy(spec: ToyTrainerSpec) -> dict:
    """Two-phase run: fit the old distribution, snapshot, then adapt to the
    new one under the composite loss; report accuracies and loss traces for
    both the consolidated and the naive update."""
    recipe = dataio.load_artifact(spec.recipe_path, "training_recipe")
    old_ds, X_old, y_old, subjects_old = _load_phase(spec.old_records, spec.old_embeddings)
    _new_ds, X_new, y_new, subjects_new = _load_phase(spec.new_records, spec.new_embeddings)
    if subjects_old != subjects_new:
        raise TrainerError("old and new phases must share the same label set")

    id_to_row = {r.id: i for i, r in enumerate(old_ds.records)}
    missing = [a for a in recipe.anchor_ids if a not in id_to_row]
    if missing:
        raise TrainerError(f"anchor ids not found in the old dataset: {missing[:5]}")
    anchor_rows = [id_to_row[a] for a in recipe.anchor_ids]
    X_anchor, y_anchor = X_old[anchor_rows], y_old[anchor_rows]

    def run(beta: float, lam: float) -> dict:
        model = SoftmaxModel.init(X_old.shape[1], len(subjects_old), spec.seed)
        _train_phase(model, X_old, y_old, lr=spec.learning_rate,
                     steps=spec.steps_per_epoch * recipe.epochs)
        theta_old = model.flat()
        fisher = fisher_diagonal(model, X_anchor, y_anchor) if anchor_rows else np.zeros_like(theta_old)
        old_acc_before = model.accuracy(X_old, y_old)
        traces = _train_phase(
            model, X_new, y_new, lr=spec.learning_rate,
            steps=spec.steps_per_epoch * recipe.epochs,
            beta=beta, lam=lam,
            anchors=(X_anchor, y_anchor) if anchor_rows else None,
            theta_old=theta_old, fisher=fisher,
        )
        return {
            "old_acc_before": old_acc_before,
            "old_acc_after": model.accuracy(X_old, y_old),
            "new_acc_after": model.accuracy(X_new, y_new),
            "traces": traces,
        }

    return {
        "ecda": run(beta=recipe.beta, lam=recipe.lam),
        "naive": run(beta=0.0, lam=0.0),
        "recipe": {"lambda": recipe.lam, "beta": recipe.beta, "epochs": recipe.epochs,
                   "anchors": len(recipe.anchor_ids)},
    }
