"""Independent reference implementations used to cross-check the package.

These deliberately share no code with the solvers they check: the FE oracle
builds the full dummy design and solves the normal equations densely.
"""

from __future__ import annotations

import numpy as np


def dense_fixed_effects(rows, n_factors, reference_policy="mean_zero"):
    """Least-squares fit of the additive FE model via a dense design matrix.

    Returns (intercept, effects, residuals) where effects is a list of
    {level: value} dicts, normalized the same way the package reports them.
    """
    n = len(rows)
    y = np.asarray([r[0] for r in rows], dtype=np.float64)

    level_order: list[list] = []
    level_index: list[dict] = []
    for j in range(n_factors):
        index: dict = {}
        order: list = []
        for r in rows:
            lev = r[1][j]
            if lev not in index:
                index[lev] = len(index)
                order.append(lev)
        level_index.append(index)
        level_order.append(order)

    blocks = [np.ones((n, 1))]
    for j in range(n_factors):
        dummies = np.zeros((n, len(level_order[j])))
        for i, r in enumerate(rows):
            dummies[i, level_index[j][r[1][j]]] = 1.0
        blocks.append(dummies)
    design = np.hstack(blocks)

    beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ beta
    residuals = y - fitted

    intercept = float(beta[0])
    effects = []
    pos = 1
    for j in range(n_factors):
        k = len(level_order[j])
        e = beta[pos : pos + k].copy()
        pos += k
        counts = np.array(
            [sum(1 for r in rows if r[1][j] == lev) for lev in level_order[j]],
            dtype=np.float64,
        )
        if reference_policy == "mean_zero":
            shift = float((e * counts).sum() / n)
        else:
            shift = float(e[0])
        e -= shift
        intercept += shift
        effects.append({lev: float(e[i]) for i, lev in enumerate(level_order[j])})
    return intercept, effects, residuals


def coefficient_rmse(fit_coeffs: dict, oracle_effects: list, factors) -> float:
    """RMSE between package and oracle coefficients over all factor levels."""
    diffs = []
    for j, factor in enumerate(factors):
        for lev, val in fit_coeffs[factor].items():
            diffs.append(val - oracle_effects[j][lev])
    return float(np.sqrt(np.mean(np.square(diffs))))


def spearman(a, b) -> float:
    """Spearman rank correlation without scipy (average ranks for ties)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(v.size)
        sv = v[order]
        i = 0
        while i < v.size:
            j = i
            while j + 1 < v.size and sv[j + 1] == sv[i]:
                j += 1
            r[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return r

    ra, rb = ranks(a), ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    return float((ra * rb).sum() / denom)
