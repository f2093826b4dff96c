"""Nested cross-validation protocol and its report files.

The outer folds estimate generalization; the inner folds pick the
hyperparameter triple (mixture size, kernel bandwidth, SVM C) by mean
validation accuracy.  All fitting runs through caller-supplied hooks so
the protocol itself stays independent of the kernel pipeline:

    fit(train_items, train_labels, hyper, seed) -> model
    predict(model, test_items) -> predicted labels

Every random draw derives from the configured seed, so repeated runs
produce identical reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Hyper:
    m: int
    sigma: float
    C: float


@dataclass(frozen=True)
class CvConfig:
    outer_folds: int = 10
    inner_folds: int = 10
    repeats: int = 10
    m_grid: tuple = (3, 4, 5, 6, 7, 8)
    sigma_grid: tuple = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)
    c_grid: tuple = (0.1, 1.0, 10.0, 100.0)
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ValueError("fold counts must be at least 2")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not self.m_grid or not self.sigma_grid or not self.c_grid:
            raise ValueError("hyperparameter grids must be non-empty")

    def grid(self):
        return [
            Hyper(m, s, c)
            for m in sorted(self.m_grid)
            for s in sorted(self.sigma_grid)
            for c in sorted(self.c_grid)
        ]


@dataclass
class FoldRecord:
    repeat: int
    fold: int
    hyper: Hyper
    accuracy: float


@dataclass
class CvReport:
    records: list = field(default_factory=list)
    repeat_means: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def mean_accuracy(self) -> float:
        return float(self.repeat_means.mean())

    @property
    def std_accuracy(self) -> float:
        """Standard deviation across the repeats' mean accuracies."""
        return float(self.repeat_means.std())


def derive_seed(*fields) -> int:
    """Stable child seed from a tuple of small non-negative integers."""
    return int(np.random.SeedSequence(entropy=list(fields)).generate_state(1)[0])


def assign_folds(labels, n_folds: int, rng, stratified: bool) -> np.ndarray:
    """Fold id per item; sizes differ by at most one.

    Stratified assignment shuffles each class and deals members onto a
    global rotating fold pointer, so folds are balanced overall and per
    class.  Requires every class to have at least n_folds members.
    """
    labels = np.asarray(labels, dtype=np.intp)
    n = labels.shape[0]
    if n < n_folds:
        raise ValueError(f"cannot split {n} items into {n_folds} folds")
    fold_of = np.empty(n, dtype=np.intp)
    if stratified:
        ptr = 0
        for cls in np.unique(labels):
            idx = np.flatnonzero(labels == cls)
            if idx.size < n_folds:
                raise ValueError(
                    f"class {cls} has {idx.size} members, fewer than {n_folds} folds"
                )
            rng.shuffle(idx)
            for i in idx:
                fold_of[i] = ptr % n_folds
                ptr += 1
    else:
        order = rng.permutation(n)
        for pos, i in enumerate(order):
            fold_of[i] = pos % n_folds
    return fold_of


def _take(items, idx):
    return [items[i] for i in idx]


def nested_cv(items, labels, cfg: CvConfig, fit, predict, fit_batch=None) -> CvReport:
    """Repeated nested cross-validation over the hyperparameter grid.

    For each outer fold the inner folds score every (m, sigma, C) by mean
    validation accuracy (ties resolved toward the smaller values); the
    winner is refit on the whole outer-training split and evaluated once
    on the outer test fold.  Only training splits ever reach ``fit``.

    ``fit_batch(train_items, train_labels, hypers, seed) -> {hyper: model}``
    optionally fits the whole grid for one split in a single call so
    shared work (image grids, distance workspaces) is not repeated; it
    must be equivalent to calling ``fit`` per hyperparameter triple.
    """
    labels = np.asarray(labels, dtype=np.intp)
    grid = cfg.grid()
    report = CvReport()
    repeat_means = []
    for rep in range(cfg.repeats):
        rng_outer = np.random.default_rng(derive_seed(cfg.seed, rep, 0))
        outer = assign_folds(labels, cfg.outer_folds, rng_outer, cfg.stratified)
        fold_accs = []
        for fold in range(cfg.outer_folds):
            test_idx = np.flatnonzero(outer == fold)
            train_idx = np.flatnonzero(outer != fold)
            tr_labels = labels[train_idx]
            rng_inner = np.random.default_rng(derive_seed(cfg.seed, rep, 1, fold))
            inner = assign_folds(tr_labels, cfg.inner_folds, rng_inner, cfg.stratified)
            scores = {hyper: [] for hyper in grid}
            for ifold in range(cfg.inner_folds):
                val_pos = np.flatnonzero(inner == ifold)
                fit_pos = np.flatnonzero(inner != ifold)
                fit_items = _take(items, train_idx[fit_pos])
                val_items = _take(items, train_idx[val_pos])
                seed = derive_seed(cfg.seed, rep, 2, fold, ifold)
                if fit_batch is not None:
                    models = fit_batch(fit_items, tr_labels[fit_pos], grid, seed)
                else:
                    models = {
                        hyper: fit(fit_items, tr_labels[fit_pos], hyper, seed)
                        for hyper in grid
                    }
                for hyper in grid:
                    pred = predict(models[hyper], val_items)
                    scores[hyper].append(float(np.mean(pred == tr_labels[val_pos])))
            best_hyper, best_score = None, -1.0
            for hyper in grid:
                score = float(np.mean(scores[hyper]))
                if score > best_score:
                    best_score, best_hyper = score, hyper
            seed = derive_seed(cfg.seed, rep, 3, fold)
            model = fit(_take(items, train_idx), tr_labels, best_hyper, seed)
            pred = predict(model, _take(items, test_idx))
            acc = float(np.mean(pred == labels[test_idx]))
            fold_accs.append(acc)
            report.records.append(FoldRecord(rep, fold, best_hyper, acc))
        repeat_means.append(float(np.mean(fold_accs)))
    report.repeat_means = np.array(repeat_means)
    return report


def report_to_csv(report: CvReport, path: str) -> None:
    """Rows ``repeat,fold,m,sigma,C,accuracy`` plus a summary row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "fold", "m", "sigma", "C", "accuracy"])
        for rec in report.records:
            writer.writerow(
                [
                    rec.repeat,
                    rec.fold,
                    rec.hyper.m,
                    repr(rec.hyper.sigma),
                    repr(rec.hyper.C),
                    repr(rec.accuracy),
                ]
            )
        writer.writerow(
            ["summary", "", "", "", repr(report.mean_accuracy), repr(report.std_accuracy)]
        )


def report_summary(report: CvReport) -> str:
    lines = [
        f"repeats: {len(report.repeat_means)}",
        "per-repeat mean accuracy: "
        + ", ".join(f"{v:.4f}" for v in report.repeat_means),
        f"mean accuracy: {report.mean_accuracy:.4f} +/- {report.std_accuracy:.4f}",
    ]
    return "\n".join(lines) + "\n"
