"""Losses, negative sampling, optimizer, and the two-stage task scheduler."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics
from .autodiff import Tensor
from .util import stable_seed


class NumericError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.001
    l2_lambda: float = 1e-5
    gamma_smooth: float = 10.0
    negatives_per_pos: int = 5
    i2i_test_negatives: int = 100
    batch: int = 64
    patience: int = 10
    alternation_period: int = 100
    stage1_epochs: int = 50
    stage2_epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "l2_lambda", "gamma_smooth", "negatives_per_pos",
                     "batch", "patience", "alternation_period"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def ranking_loss(scores, pos_index, gamma):
    """Softmax ranking loss with temperature over one candidate set.

    scores: rank-1 tensor; pos_index marks the single positive. Returns
    -log of the positive's softmax probability under temperature gamma.
    """
    s = ad.scale(scores, gamma)
    return ad.sub(ad.logsumexp(s), ad.take(s, pos_index))


def ce_loss(probs, label):
    """Cross entropy of a probability vector against an integer label."""
    m = probs.data.shape[-1]
    if not 0 <= label < m:
        raise ValueError(f"label {label} out of range for {m} classes")
    return ad.scale(ad.log(ad.take(probs, label)), -1.0)


def l2_penalty(params, lam, exclude=("entity_emb",)):
    """lam * sum of squared entries over trainable parameters."""
    total = None
    for name, t in params.items():
        if name in exclude:
            continue
        sq = ad.sumsq(t)
        total = sq if total is None else ad.add(total, sq)
    return ad.scale(total, lam)


def sample_negatives(positive, pool, n, seed):
    """n distinct uniform draws from pool (which must exclude `positive`)."""
    if len(pool) < n:
        raise ValueError(f"pool of {len(pool)} too small for {n} negatives")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in idx]


class Adam:
    """Standard Adam over a ParamStore; zeroes gradients after each step."""

    def __init__(self, params, cfg):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self):
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        for name, t in self.params.items():
            g = t.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            t.data -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        self.params.zero_grad()


@dataclass
class TaskData:
    """Training/validation instances for one task.

    u2i: (history doc_ids tuple, positive doc_id); i2i: (anchor, positive);
    classification: (doc_id, label). Validation groups are (scores-context)
    structures interpreted per task by the trainer.
    """
    name: str
    train: list
    valid: list


@dataclass
class LogRecord:
    epoch: int
    task: str
    loss: float
    val_metric: float
    wall_ms: float

    def line(self):
        return (f"{self.epoch}\t{self.task}\t{self.loss:.6f}\t"
                f"{self.val_metric:.6f}\t{self.wall_ms:.1f}")


class Trainer:
    """Two-stage multi-task trainer over a shared backbone.

    Stage 1 alternates enabled tasks every `alternation_period` mini-batches;
    stage 2 trains the target task only. Early stopping tracks the target
    task's validation metric with the configured patience, and the best
    validation snapshot is restored at the end.
    """

    def __init__(self, model, cfg, tasks, target_task, docs_by_id,
                 log_fn=None):
        if not tasks:
            raise ValueError("at least one task is required")
        names = [t.name for t in tasks]
        if target_task not in names:
            raise ValueError(f"target task {target_task!r} not enabled {names}")
        self.model = model
        self.cfg = cfg
        self.tasks = {t.name: t for t in tasks}
        self.target = target_task
        self.docs = docs_by_id
        self.adam = Adam(model.params, cfg)
        self.log = []
        self.log_fn = log_fn
        self.loss_trajectory = []

    # ----- instance losses -------------------------------------------------

    def _candidate_pool(self, exclude):
        return [d for d in sorted(self.docs) if d not in exclude]

    def _instance_loss(self, task, inst, epoch, idx, cache):
        cfg = self.cfg
        seed = stable_seed(cfg.seed, epoch, idx)
        if task == "user2item":
            history, pos = inst
            pool = self._candidate_pool(set(history) | {pos})
            negs = sample_negatives(pos, pool, cfg.negatives_per_pos, seed)
            u = self.model.user_vector([self.docs[d] for d in history],
                                       neighbor_seed=epoch, cache=cache)
            scores = [self.model.score_user_item(
                u, self.model.kdv(self.docs[d], epoch, cache))
                for d in [pos] + negs]
            return ranking_loss(ad.stack(scores), 0, cfg.gamma_smooth)
        if task == "item2item":
            anchor, pos = inst
            pool = self._candidate_pool({anchor, pos})
            negs = sample_negatives(pos, pool, cfg.negatives_per_pos, seed)
            a = self.model.kdv(self.docs[anchor], epoch, cache)
            scores = [self.model.item_similarity(
                a, self.model.kdv(self.docs[d], epoch, cache))
                for d in [pos] + negs]
            return ranking_loss(ad.stack(scores), 0, cfg.gamma_smooth)
        doc_id, label = inst
        probs = self.model.classify(self.model.kdv(self.docs[doc_id], epoch,
                                                   cache), task)
        return ce_loss(probs, label)

    def _run_batch(self, task, batch, epoch, base_idx):
        cache = {}
        total = None
        for j, inst in enumerate(batch):
            loss = self._instance_loss(task, inst, epoch, base_idx + j, cache)
            total = loss if total is None else ad.add(total, loss)
        total = ad.scale(total, 1.0 / len(batch))
        total = ad.add(total, l2_penalty(self.model.params,
                                         self.cfg.l2_lambda))
        value = total.item()
        if not np.isfinite(value):
            raise NumericError(
                f"non-finite loss {value} (task={task}, epoch={epoch})")
        ad.accumulate_grads(total, self.model.params)
        self.adam.step()
        if len(self.loss_trajectory) < 10:
            self.loss_trajectory.append(value)
        return value

    # ----- validation ------------------------------------------------------

    def validate(self, task_name):
        """Target metric on a task's validation instances.

        user2item/item2item/local use AUC; category and popularity use
        accuracy. Validation candidate scores reuse frozen parameters.
        """
        task = self.tasks[task_name]
        model = self.model
        cache = {}
        if task_name == "user2item":
            groups = []
            for history, cands in task.valid:
                u = model.user_vector([self.docs[d] for d in history],
                                      cache=cache)
                scores = [model.score_user_item(
                    u, model.kdv(self.docs[d], cache=cache)).item()
                    for d, _ in cands]
                labels = [lab for _, lab in cands]
                groups.append((scores, labels))
            val, _, _ = metrics.grouped_metric(groups, metrics.auc)
            return val
        if task_name == "item2item":
            groups = []
            for anchor, cands in task.valid:
                a = model.kdv(self.docs[anchor], cache=cache)
                scores = [model.item_similarity(
                    a, model.kdv(self.docs[d], cache=cache)).item()
                    for d, _ in cands]
                labels = [lab for _, lab in cands]
                groups.append((scores, labels))
            val, _, _ = metrics.grouped_metric(groups, metrics.auc)
            return val
        preds, labels, pos_scores = [], [], []
        for doc_id, label in task.valid:
            probs = model.classify(model.kdv(self.docs[doc_id], cache=cache),
                                   task_name)
            preds.append(int(np.argmax(probs.data)))
            pos_scores.append(float(probs.data[-1] if task_name != "local"
                                    else probs.data[1]))
            labels.append(label)
        if task_name == "local":
            # macro-F1 rather than AUC: with rare positives a ranking metric
            # saturates long before the decision threshold is useful, so
            # early stopping would freeze an uncalibrated head
            return metrics.macro_f1(preds, labels, 2)
        return metrics.accuracy(preds, labels)

    # ----- schedule --------------------------------------------------------

    def _epoch_batches(self, task_names, epoch):
        """Round-robin batches, switching task every alternation_period."""
        rng = np.random.default_rng(stable_seed(self.cfg.seed, epoch))
        iters = {}
        for name in task_names:
            insts = list(self.tasks[name].train)
            order = rng.permutation(len(insts))
            shuffled = [insts[i] for i in order]
            iters[name] = [shuffled[i:i + self.cfg.batch]
                           for i in range(0, len(shuffled), self.cfg.batch)]
        cursors = {name: 0 for name in task_names}
        while any(cursors[n] < len(iters[n]) for n in task_names):
            for name in task_names:
                taken = 0
                while (cursors[name] < len(iters[name])
                       and taken < self.cfg.alternation_period):
                    yield name, iters[name][cursors[name]]
                    cursors[name] += 1
                    taken += 1

    def _run_stage(self, task_names, max_epochs, start_epoch):
        # incoming parameters are the baseline checkpoint so early stopping
        # can never hand back something worse than a previous stage's best
        best_metric = self.validate(self.target)
        best_snap = self.model.params.snapshot()
        stall = 0
        e = -1
        for e in range(max_epochs):
            epoch = start_epoch + e
            t0 = time.perf_counter()
            losses = {n: [] for n in task_names}
            idx = 0
            for name, batch in self._epoch_batches(task_names, epoch):
                losses[name].append(self._run_batch(name, batch, epoch, idx))
                idx += len(batch)
            val = self.validate(self.target)
            wall_ms = (time.perf_counter() - t0) * 1000.0
            for name in task_names:
                if losses[name]:
                    rec = LogRecord(epoch, name, float(np.mean(losses[name])),
                                    val, wall_ms)
                    self.log.append(rec)
                    if self.log_fn:
                        self.log_fn(rec.line())
            if val > best_metric:
                best_metric = val
                best_snap = self.model.params.snapshot()
                stall = 0
            else:
                stall += 1
                if stall >= self.cfg.patience:
                    break
        if best_snap is not None:
            self.model.params.load(best_snap)
        return best_metric, start_epoch + e + 1

    def train(self):
        """Run both stages; leaves the best-validation parameters loaded."""
        names = sorted(self.tasks)
        if len(names) == 1:
            best, _ = self._run_stage(names, self.cfg.stage1_epochs
                                      + self.cfg.stage2_epochs, 0)
            return best
        _, next_epoch = self._run_stage(names, self.cfg.stage1_epochs, 0)
        best, _ = self._run_stage([self.target], self.cfg.stage2_epochs,
                                  next_epoch)
        return best
