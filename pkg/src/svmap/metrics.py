"""Hinge loss, empirical risk and accuracy."""

from __future__ import annotations

import numpy as np

from .dataset import Dataset
from .solver import SvmModel, decision_values


def hinge_loss(f_x, y):
    """max(0, 1 - y * f(x)); works elementwise on arrays."""
    out = np.maximum(0.0, 1.0 - np.asarray(y) * np.asarray(f_x, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def empirical_risk(model: SvmModel, dataset: Dataset) -> float:
    """Mean hinge loss of ``model`` over ``dataset``."""
    if dataset.n == 0:
        raise ValueError("empirical risk of an empty dataset is undefined")
    y = dataset.require_labels()
    return float(np.mean(hinge_loss(decision_values(model, dataset.X), y)))


def accuracy(model: SvmModel, dataset: Dataset) -> float:
    if dataset.n == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    y = dataset.require_labels()
    pred = np.where(decision_values(model, dataset.X) >= 0, 1, -1)
    return float(np.mean(pred == y))
