"""Unimodal reference classifiers used to calibrate and bound the planted signal."""

from __future__ import annotations

import numpy as np

from .autodiff import sigmoid_value


def tabular_features(samples, schema):
    """Same preprocessing the encoder uses: one-hot categoricals, min-max numericals."""
    rows = []
    for s in samples:
        row = []
        for a in schema.attributes:
            if a.kind == "categorical":
                onehot = [0.0] * len(a.levels)
                onehot[a.levels.index(str(s.record[a.name]))] = 1.0
                row.extend(onehot)
            else:
                t = (float(s.record[a.name]) - a.vmin) / (a.vmax - a.vmin)
                row.append(min(max(t, 0.0), 1.0))
        rows.append(row)
    return np.array(rows, dtype=np.float64)


def fit_logistic(x, y, iters=400, lr=0.5):
    """Deterministic full-batch gradient-descent logistic regression."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    xs = (x - mean) / std
    w = np.zeros(x.shape[1])
    b = 0.0
    n = x.shape[0]
    for _ in range(iters):
        p = sigmoid_value(xs @ w + b)
        err = p - y
        w -= lr * (xs.T @ err / n)
        b -= lr * float(err.mean())
    return {"w": w, "b": b, "mean": mean, "std": std}


def logistic_scores(fit, x):
    xs = (x - fit["mean"]) / fit["std"]
    return sigmoid_value(xs @ fit["w"] + fit["b"])


def volume_mean_scores(samples):
    return np.array([float(np.asarray(s.volume, dtype=np.float64).mean()) for s in samples])


def baseline_scores(dataset, train_idx, eval_idx):
    """Tabular-logistic, volume-mean, and averaged-score baselines on one split.

    The volume-mean score is oriented on the training split; the fused score
    averages the two z-scored (by training statistics) unimodal scores.
    """
    train = [dataset.samples[i] for i in train_idx]
    eval_ = [dataset.samples[i] for i in eval_idx]
    y_train = np.array([s.label for s in train], dtype=np.float64)

    x_train = tabular_features(train, dataset.schema)
    x_eval = tabular_features(eval_, dataset.schema)
    fit = fit_logistic(x_train, y_train)
    tab_train = logistic_scores(fit, x_train)
    tab_eval = logistic_scores(fit, x_eval)

    vis_train = volume_mean_scores(train)
    vis_eval = volume_mean_scores(eval_)
    # orient so higher means "positive" on the training split
    if np.corrcoef(vis_train, y_train)[0, 1] < 0:
        vis_train, vis_eval = -vis_train, -vis_eval

    def zscore(train_scores, eval_scores):
        mu, sd = train_scores.mean(), train_scores.std()
        sd = sd if sd > 0 else 1.0
        return (eval_scores - mu) / sd

    fused_eval = 0.5 * (zscore(tab_train, tab_eval) + zscore(vis_train, vis_eval))
    # squash through a sigmoid so every score sits in [0, 1]; AUC is unchanged
    return {
        "tabular": tab_eval,
        "visual": sigmoid_value(zscore(vis_train, vis_eval)),
        "fused": sigmoid_value(fused_eval),
    }
