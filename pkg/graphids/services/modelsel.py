# graphids/services/modelsel.py - Cross-validation, feature selection, tuning and evaluation
import dataclasses
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.base import clone
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import GridSearchCV, StratifiedKFold, cross_val_score, cross_validate

from ..errors import SelectionError
from ..extensions import logger
from .learner import DEFAULT_CACHE_BYTES, RbfSvmClassifier, SvmModel, apply_scaler, fit_scaler, kkt_violation, predict
from .learner import train as train_svm
from .metrics import DEGREE_FEATURES
from .pipeline import FEATURE_COLUMNS, DerivedDataset

DEFAULT_C_GRID = (0.1, 1.0, 5.0, 10.0, 1e2, 1e3, 1e4, 1e5)
DEFAULT_GAMMA_GRID = (0.01, 0.1, 0.5, 1.0)


@dataclass(frozen=True)
class CvPlan:
    """Stratified fold assignment; usable as a scikit-learn ``cv`` splitter"""

    k: int
    folds: np.ndarray
    seed: int = 42

    def split(self, X=None, y=None, groups=None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            test = self.folds == fold
            yield np.flatnonzero(~test), np.flatnonzero(test)

    def get_n_splits(self, X=None, y=None, groups=None) -> int:
        return self.k


def kfold(labels, k: int, seed: int = 42) -> CvPlan:
    labels = np.asarray(labels)
    if k < 2:
        raise SelectionError(f"fold count must be at least 2, got {k}")

    classes, counts = np.unique(labels, return_counts=True)
    small = [str(c) for c, n in zip(classes, counts) if n < k]
    if small:
        raise SelectionError(f"class(es) {', '.join(small)} have fewer than {k} samples", k=k)

    folds = np.empty(labels.size, dtype=np.int64)
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    for fold, (_, test) in enumerate(splitter.split(np.zeros((labels.size, 1)), labels)):
        folds[test] = fold
    return CvPlan(k=k, folds=folds, seed=seed)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[-1, 1]).ravel()
        return cls(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def degenerate(self) -> Tuple[str, ...]:
        """Rates whose denominator is zero and which are therefore reported as 0"""
        flags = []
        if 2 * self.tp + self.fp + self.fn == 0:
            flags.append("f1_malicious")
        if 2 * self.tn + self.fp + self.fn == 0:
            flags.append("f1_benign")
        if self.fp + self.tn == 0:
            flags.append("fpr")
        if self.fn + self.tp == 0:
            flags.append("fnr")
        return tuple(flags)

    def to_dict(self) -> Dict[str, int]:
        return dataclasses.asdict(self)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1(conf: ConfusionCounts, positive: bool = True) -> float:
    """F1 of the malicious class, or of the benign class with positive=False"""
    if positive:
        return _ratio(2 * conf.tp, 2 * conf.tp + conf.fp + conf.fn)
    return _ratio(2 * conf.tn, 2 * conf.tn + conf.fn + conf.fp)


def class_scores(conf: ConfusionCounts) -> Dict[str, Tuple[float, int]]:
    return {
        "benign": (f1(conf, positive=False), conf.tn + conf.fp),
        "malicious": (f1(conf), conf.tp + conf.fn),
    }


def weighted_f1(per_class: Mapping[str, Tuple[float, int]]) -> float:
    """Per-class F1 averaged with class support as weights"""
    support = sum(n for _, n in per_class.values())
    return _ratio(sum(score * n for score, n in per_class.values()), support)


def fpr(conf: ConfusionCounts) -> float:
    return _ratio(conf.fp, conf.fp + conf.tn)


def fnr(conf: ConfusionCounts) -> float:
    return _ratio(conf.fn, conf.fn + conf.tp)


@dataclass(frozen=True)
class TrainingPlan:
    """Hyperparameters of the selection, tuning and robustness stages"""

    c_grid: Tuple[float, ...] = DEFAULT_C_GRID
    gamma_grid: Tuple[float, ...] = DEFAULT_GAMMA_GRID
    ffs_cap: int = 8
    ffs_epsilon: float = 1e-4
    ffs_gamma: float = 1.0
    ffs_c: float = 1.0
    cv_folds: int = 5
    robustness_folds: int = 10
    seed: int = 42
    tol: float = 1e-3
    max_passes: int = 10
    cache_bytes: int = DEFAULT_CACHE_BYTES
    workers: int = 1

    @classmethod
    def from_config(cls, config, **overrides) -> "TrainingPlan":
        values = dict(
            c_grid=tuple(config.get("C_GRID", DEFAULT_C_GRID)),
            gamma_grid=tuple(config.get("GAMMA_GRID", DEFAULT_GAMMA_GRID)),
            ffs_cap=config.get("FFS_CAP", 8),
            ffs_epsilon=config.get("FFS_EPSILON", 1e-4),
            ffs_gamma=config.get("FFS_GAMMA", 1.0),
            ffs_c=config.get("FFS_C", 1.0),
            cv_folds=config.get("CV_FOLDS", 5),
            robustness_folds=config.get("ROBUSTNESS_FOLDS", 10),
            seed=config.get("SEED", 42),
            tol=config.get("SVM_TOL", 1e-3),
            max_passes=config.get("SVM_MAX_PASSES", 10),
            cache_bytes=config.get("KERNEL_CACHE_BYTES", DEFAULT_CACHE_BYTES),
            workers=config.get("WORKERS", 1),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def estimator(self, c: float, gamma: float) -> RbfSvmClassifier:
        return RbfSvmClassifier(C=c, gamma=gamma, tol=self.tol, max_passes=self.max_passes,
                                cache_bytes=self.cache_bytes)


@dataclass
class SelectionResult:
    selected: List[int]
    names: List[str]
    step_scores: List[float]

    @property
    def most_significant(self) -> Optional[str]:
        return self.names[0] if self.names else None

    def to_dict(self) -> dict:
        return {
            "features": list(self.names),
            "n_features": len(self.names),
            "most_significant": self.most_significant,
            "step_f1": [round(s, 6) for s in self.step_scores],
        }


def _cv_f1(estimator, x: np.ndarray, y: np.ndarray, cv: CvPlan) -> float:
    return float(cross_val_score(clone(estimator), x, y, cv=cv, scoring="f1").mean())


def forward_select(x, y, candidate_features: Sequence[int], cap: int = 8,
                   estimator: Optional[RbfSvmClassifier] = None, cv: Optional[CvPlan] = None,
                   epsilon: float = 1e-4, feature_names: Sequence[str] = FEATURE_COLUMNS,
                   workers: int = 1) -> SelectionResult:
    """Greedy forward selection maximising mean cross-validated F1.

    Candidates are scanned in ascending index order and only a strictly
    better score replaces the running best, so ties go to the lower index.
    Selection stops at ``cap`` features or when the best candidate improves
    the score by less than ``epsilon``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    remaining = sorted(set(int(f) for f in candidate_features))
    if not remaining:
        raise SelectionError("forward selection needs at least one candidate feature")

    estimator = estimator if estimator is not None else RbfSvmClassifier(C=1.0, gamma=1.0)
    cv = cv if cv is not None else kfold(y, 5)

    selected: List[int] = []
    scores: List[float] = []
    best = -np.inf

    while remaining and len(selected) < cap:
        # Results come back in candidate order whatever the worker count
        results = Parallel(n_jobs=workers)(
            delayed(_cv_f1)(estimator, x[:, selected + [f]], y, cv) for f in remaining
        )

        step_best, step_feature = -np.inf, None
        for feature, score in zip(remaining, results):
            if score > step_best:
                step_best, step_feature = score, feature

        if scores and step_best - best < epsilon:
            logger.info(f"🎯 FFS saturated at {len(selected)} feature(s): best gain {step_best - best:.2e}")
            break

        selected.append(step_feature)
        remaining.remove(step_feature)
        scores.append(step_best)
        best = step_best
        logger.info(f"FFS step {len(selected)}: +{feature_names[step_feature]} (F1={step_best:.6f})")

    return SelectionResult(selected, [feature_names[f] for f in selected], scores)


@dataclass
class GridResult:
    gamma: float
    c: float
    score: float
    table: pd.DataFrame

    @property
    def n_cells(self) -> int:
        return len(self.table)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "C": self.c,
            "mean_f1": round(self.score, 6),
            "cells": [
                {"C": float(r.C), "gamma": float(r.gamma), "mean_f1": round(float(r.mean_f1), 6),
                 "mean_support_vectors": round(float(r.mean_support), 3)}
                for r in self.table.itertuples(index=False)
            ],
        }


def _support_count(estimator, x, y) -> float:
    """Scorer reporting the fitted model's support-vector count"""
    return float(estimator.model_.n_support)


def best_cell(table: pd.DataFrame) -> pd.Series:
    """Highest mean F1; ties go to the fewest support vectors, then the smallest C, then the smallest gamma"""
    top = table["mean_f1"].max()
    tied = table[table["mean_f1"] == top]
    return tied.sort_values(["mean_support", "C", "gamma"], kind="stable").iloc[0]


def grid_search(x, y, c_grid: Sequence[float] = DEFAULT_C_GRID, gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
                cv: Optional[CvPlan] = None, estimator: Optional[RbfSvmClassifier] = None,
                workers: int = 1) -> GridResult:
    """Exhaustive (C, gamma) search scored by mean F1; see best_cell for the tie rule"""
    c_values = sorted(set(float(c) for c in c_grid))
    gamma_values = sorted(set(float(g) for g in gamma_grid))
    if not c_values or not gamma_values:
        raise SelectionError("hyperparameter grids must be non-empty")

    y = np.asarray(y)
    cv = cv if cv is not None else kfold(y, 5)
    estimator = estimator if estimator is not None else RbfSvmClassifier()

    search = GridSearchCV(
        estimator,
        {"C": c_values, "gamma": gamma_values},
        scoring={"f1": "f1", "support": _support_count},
        cv=cv,
        refit=False,
        n_jobs=workers,
        error_score="raise",
    )
    search.fit(np.asarray(x, dtype=float), y)

    results = search.cv_results_
    table = pd.DataFrame({
        "C": np.asarray(results["param_C"], dtype=float),
        "gamma": np.asarray(results["param_gamma"], dtype=float),
        "mean_f1": results["mean_test_f1"],
        "std_f1": results["std_test_f1"],
        "mean_support": results["mean_test_support"],
    })
    table = table.sort_values(["C", "gamma"], kind="stable").reset_index(drop=True)

    best = best_cell(table)
    logger.info(f"🎯 Grid search over {len(table)} cells: best C={best.C:g} gamma={best.gamma:g} "
                f"(F1={best.mean_f1:.6f}, {best.mean_support:.1f} support vectors)")
    return GridResult(gamma=float(best.gamma), c=float(best.C), score=float(best.mean_f1), table=table)


@dataclass
class TuningResult:
    grid: GridResult
    f1_before: float

    @property
    def f1_after(self) -> float:
        return self.grid.score

    @property
    def increment_percent(self) -> Optional[float]:
        if self.f1_before == 0:
            return None
        return (self.f1_after - self.f1_before) / self.f1_before * 100

    def to_dict(self) -> dict:
        increment = self.increment_percent
        return {
            "f1_before": round(self.f1_before, 6),
            "f1_after": round(self.f1_after, 6),
            "increment_percent": None if increment is None else round(increment, 4),
            **self.grid.to_dict(),
        }


@dataclass
class RobustnessResult:
    scores: List[float]
    support_counts: List[int]
    train_sizes: List[int]

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.scores))

    @property
    def std_f1(self) -> float:
        return float(np.std(self.scores))

    @property
    def mean_support(self) -> float:
        return float(np.mean(self.support_counts))

    @property
    def support_share(self) -> float:
        """Mean support-vector count over mean training-fold size"""
        return self.mean_support / float(np.mean(self.train_sizes))

    def to_dict(self) -> dict:
        return {
            "folds": len(self.scores),
            "mean_f1": round(self.mean_f1, 6),
            "std_f1": round(self.std_f1, 6),
            "fold_f1": [round(s, 6) for s in self.scores],
            "support_vectors": list(self.support_counts),
            "mean_support_vectors": round(self.mean_support, 3),
            "support_share": round(self.support_share, 6),
        }


def robustness(x, y, estimator: RbfSvmClassifier, k: int = 10, seed: int = 42,
               workers: int = 1) -> RobustnessResult:
    y = np.asarray(y)
    cv = kfold(y, k, seed)
    outcome = cross_validate(clone(estimator), np.asarray(x, dtype=float), y, cv=cv, scoring="f1",
                             return_estimator=True, n_jobs=workers, error_score="raise")

    scores = [float(s) for s in outcome["test_score"]]
    supports = [int(est.model_.n_support) for est in outcome["estimator"]]
    sizes = [int(train.size) for train, _ in cv.split()]
    result = RobustnessResult(scores, supports, sizes)
    logger.info(f"✅ {k}-fold robustness: F1 {result.mean_f1:.6f} +/- {result.std_f1:.6f}, "
                f"{result.mean_support:.1f} support vectors on average")
    return result


@dataclass
class EvaluationReport:
    confusion: ConfusionCounts
    f1_benign: float
    f1_malicious: float
    weighted_f1: float
    fpr: float
    fnr: float
    per_attack: Dict[str, Dict[str, int]]
    n_support: int
    selected_features: List[str]
    gamma: float
    c: float
    composition: Dict[str, int] = field(default_factory=dict)
    flags: Tuple[str, ...] = ()

    @property
    def false_negatives(self) -> Dict[str, int]:
        return {name: counts["missed"] for name, counts in self.per_attack.items() if counts["missed"]}

    def check_consistency(self) -> bool:
        """Every stored rate recomputes exactly from the confusion counts"""
        conf = self.confusion
        return (
            self.fpr == fpr(conf)
            and self.fnr == fnr(conf)
            and self.f1_malicious == f1(conf)
            and self.f1_benign == f1(conf, positive=False)
            and self.weighted_f1 == weighted_f1(class_scores(conf))
            and all(0.0 <= r <= 1.0 for r in (self.fpr, self.fnr, self.f1_benign, self.f1_malicious))
        )

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.to_dict(),
            "f1": {"benign": self.f1_benign, "malicious": self.f1_malicious, "weighted": self.weighted_f1},
            "fpr": self.fpr,
            "fnr": self.fnr,
            "fp_errors": self.confusion.fp,
            "fn_errors": self.confusion.fn,
            "per_attack": {name: dict(counts) for name, counts in sorted(self.per_attack.items())},
            "support_vectors": self.n_support,
            "selected_features": list(self.selected_features),
            "gamma": self.gamma,
            "C": self.c,
            "composition": dict(self.composition),
            "degenerate": list(self.flags),
        }


def select_columns(model: SvmModel, dataset: DerivedDataset) -> np.ndarray:
    names = list(model.feature_names)
    available = set(dataset.frame.columns)
    missing = [name for name in names if name not in available]
    if missing:
        raise SelectionError(f"test data lacks model feature(s): {', '.join(missing)}", missing=missing)
    return dataset.features(names)


def evaluate(model: SvmModel, test: DerivedDataset, benign_label: str = "Benign") -> EvaluationReport:
    if len(test) == 0:
        raise SelectionError("cannot evaluate on an empty test set")

    x = select_columns(model, test)
    y_true = test.targets(benign_label)
    y_pred = predict(model, x)
    conf = ConfusionCounts.from_labels(y_true, y_pred)

    labels = test.labels
    malicious = y_true > 0
    per_attack: Dict[str, Dict[str, int]] = {}
    for name in sorted(set(labels[malicious])):
        rows = malicious & (labels == name)
        detected = int((y_pred[rows] > 0).sum())
        per_attack[str(name)] = {"detected": detected, "missed": int(rows.sum()) - detected}

    scores = class_scores(conf)
    report = EvaluationReport(
        confusion=conf,
        f1_benign=scores["benign"][0],
        f1_malicious=scores["malicious"][0],
        weighted_f1=weighted_f1(scores),
        fpr=fpr(conf),
        fnr=fnr(conf),
        per_attack=per_attack,
        n_support=model.n_support,
        selected_features=list(model.feature_names),
        gamma=model.gamma,
        c=model.c,
        composition={"benign": int((~malicious).sum()), "malicious": int(malicious.sum())},
        flags=conf.degenerate(),
    )
    logger.info(f"📊 Evaluated on {conf.total} records: weighted F1={report.weighted_f1:.4f} "
                f"FPR={report.fpr:.4f} FNR={report.fnr:.4f}")
    return report


@dataclass
class TrainingOutcome:
    model: SvmModel
    selection: SelectionResult
    tuning: TuningResult
    robustness: RobustnessResult
    kkt: float
    n_train: int

    def to_dict(self) -> dict:
        return {
            "training_size": self.n_train,
            "selection": self.selection.to_dict(),
            "tuning": self.tuning.to_dict(),
            "robustness": self.robustness.to_dict(),
            "model": {
                "support_vectors": self.model.n_support,
                "gamma": self.model.gamma,
                "C": self.model.c,
                "bias": self.model.bias,
                "iterations": self.model.iterations,
                "converged": self.model.converged,
                "kkt_violation": self.kkt,
            },
        }


def degree_mask(names: Sequence[str] = FEATURE_COLUMNS) -> np.ndarray:
    """Scale only the unbounded degree family"""
    degree_columns = {f"{side}_{name}" for side in ("src", "dst") for name in DEGREE_FEATURES}
    return np.array([name in degree_columns for name in names])


def run_training(train_set: DerivedDataset, plan: TrainingPlan = TrainingPlan(),
                 benign_label: str = "Benign") -> TrainingOutcome:
    """Scaling, forward selection, grid search, robustness check and final fit"""
    x = train_set.features()
    y = train_set.targets(benign_label)
    if np.unique(y).size < 2:
        raise SelectionError("training data must contain both benign and malicious records")

    scaler = fit_scaler(x, degree_mask())
    x_scaled = apply_scaler(scaler, x)
    logger.info(f"Training on {len(y)} records ({int((y > 0).sum())} malicious)")

    cv = kfold(y, plan.cv_folds, plan.seed)
    selection = forward_select(
        x_scaled, y, range(len(FEATURE_COLUMNS)), cap=plan.ffs_cap,
        estimator=plan.estimator(plan.ffs_c, plan.ffs_gamma), cv=cv, epsilon=plan.ffs_epsilon,
        workers=plan.workers,
    )
    x_selected = x_scaled[:, selection.selected]

    grid = grid_search(x_selected, y, plan.c_grid, plan.gamma_grid, cv=cv,
                       estimator=plan.estimator(plan.ffs_c, plan.ffs_gamma), workers=plan.workers)
    tuning = TuningResult(grid=grid, f1_before=selection.step_scores[-1])

    best = plan.estimator(grid.c, grid.gamma)
    robust = robustness(x_selected, y, best, k=plan.robustness_folds, seed=plan.seed, workers=plan.workers)

    prepared = train_svm(x_selected, y, c=grid.c, gamma=grid.gamma, tol=plan.tol, max_passes=plan.max_passes,
                         cache_bytes=plan.cache_bytes)
    kkt = kkt_violation(x_selected, y, prepared)
    model = dataclasses.replace(
        prepared,
        scaler=scaler.restrict(selection.selected),
        feature_mask=tuple(selection.selected),
        feature_names=tuple(selection.names),
    )
    return TrainingOutcome(model, selection, tuning, robust, kkt, len(y))


@dataclass
class CellResult:
    """One (sigma, omega) cell of the comparison matrix"""

    sigma: str
    policy: str
    training: Optional[TrainingOutcome] = None
    evaluation: Optional[EvaluationReport] = None
    error: Optional[str] = None
    n_records: Optional[int] = None

    @property
    def single_snapshot(self) -> bool:
        """Whole-dataset schedule, including integer sigmas clamped to N"""
        if self.sigma.strip().upper() == "N":
            return True
        return self.n_records is not None and int(self.sigma) >= self.n_records

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def fnr(self) -> float:
        return self.evaluation.fnr

    @property
    def fpr(self) -> float:
        return self.evaluation.fpr

    @property
    def label(self) -> str:
        return f"sigma={self.sigma}/omega={self.policy}"


def select_best_cells(cells: Sequence[CellResult]) -> List[CellResult]:
    """Cells with the minimal FNR, ranked by FPR (first is the chosen model)"""
    done = [cell for cell in cells if cell.ok and cell.evaluation is not None]
    if not done:
        return []
    lowest = min(cell.fnr for cell in done)
    return sorted((cell for cell in done if cell.fnr == lowest), key=lambda cell: cell.fpr)


__all__ = [
    "CvPlan",
    "kfold",
    "ConfusionCounts",
    "f1",
    "class_scores",
    "weighted_f1",
    "fpr",
    "fnr",
    "TrainingPlan",
    "SelectionResult",
    "forward_select",
    "GridResult",
    "best_cell",
    "grid_search",
    "TuningResult",
    "RobustnessResult",
    "robustness",
    "EvaluationReport",
    "evaluate",
    "select_columns",
    "TrainingOutcome",
    "degree_mask",
    "run_training",
    "CellResult",
    "select_best_cells",
]
