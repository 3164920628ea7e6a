#!/usr/bin/env python3
"""Cross-fitted IPI: train the imputer in-sample without a holdout.

Plain IPI needs the imputer trained on rows it never touches at
inference time. The cross-fitted variant folds the data, imputes each
fold with a model trained on the others, and replaces the plug-in
variance with an out-of-bag bootstrap, so no data is sacrificed.

Usage:
    python 03_cross_fitting.py
"""

import numpy as np

from ipinfer import estimators, imputers, losses
from ipinfer.patterns import build_dataset


def make_matrix(rng, n_complete=150, per_pattern=450):
    total = n_complete + 2 * per_pattern
    factor = rng.standard_normal((total, 1))
    x = 0.8 * factor + 0.6 * rng.standard_normal((total, 4))
    matrix = x.copy()
    matrix[n_complete : n_complete + per_pattern, 0] = np.nan
    matrix[n_complete + per_pattern :, 1] = np.nan
    return matrix


def main():
    rng = np.random.default_rng(9)
    loss, target_dims = losses.loss_for_columns(losses.MEAN, columns=(0, 1))
    dataset = build_dataset(make_matrix(rng), target_dims)

    fit = estimators.cipi_fit(
        dataset,
        loss,
        imputers.CHAINED_KIND,
        k_folds=5,
        n_boot=40,
        alpha=0.1,
        seed=9,
    )
    print(f"method: {fit.method}")
    for j, name in enumerate(["mean(x0)", "mean(x1)"]):
        lo, hi = fit.ci[j]
        print(f"{name}: {fit.theta_hat[j]:+.4f}  [{lo:+.4f}, {hi:+.4f}]")
    print(f"bootstrap draws: 40 over 5 folds; weights {np.round(fit.weights.lam, 3)}")

    # The same data through plain IPI with a 20% holdout for comparison.
    train, inference = estimators.split_train_inference(
        dataset, 0.2, np.random.SeedSequence(9)
    )
    model = imputers.fit(imputers.CHAINED_KIND, train, target_dims)
    plain = estimators.ipi_fit(inference, loss, model, alpha=0.1)
    width_cipi = float(np.mean(np.diff(fit.ci, axis=1)))
    width_plain = float(np.mean(np.diff(plain.ci, axis=1)))
    print(
        f"mean width: cross-fitted {width_cipi:.4f} on all rows "
        f"vs holdout IPI {width_plain:.4f} on {inference.n_rows} rows"
    )


if __name__ == "__main__":
    main()
