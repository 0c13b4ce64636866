"""Least-squares helpers shared by the fitting routines."""

import numpy as np

from .errors import DegenerateRegression


RCOND = 1e-8


def ridge_solve(X, Y, ridge=0.0, rcond=RCOND):
    """Solve ``min |X C - Y|^2 / n + ridge |C|^2`` column-wise.

    Columns of ``X`` with numerically zero norm get zero coefficients.  With
    ``ridge == 0`` the minimum-norm least-squares solution is returned, with
    singular values of the column-normalized design below ``rcond`` times the
    largest treated as zero (data lying on an invariant manifold make some
    monomials almost exactly collinear).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    coef = np.zeros((p,) + Y.shape[1:])
    norms = np.linalg.norm(X, axis=0)
    scale_ref = max(norms.max(initial=0.0), 1.0)
    live = norms > 1e-14 * scale_ref
    if not live.any():
        return coef
    Xs = X[:, live] / norms[live]
    if ridge > 0:
        G = Xs.T @ Xs / n + ridge * np.diag(1.0 / norms[live] ** 2)
        sol = np.linalg.solve(G, Xs.T @ Y / n)
    else:
        sol = np.linalg.lstsq(Xs, Y, rcond=rcond)[0]
    coef[live] = sol / (norms[live][:, None] if sol.ndim == 2 else norms[live])
    return coef


def thresholded_fit(X, Y, ridge=0.0, threshold=0.0, max_iter=50):
    """Ridge least squares followed by iterated hard thresholding.

    Returns ``(coef, active)`` where ``coef`` has shape ``(p, m)`` and
    ``active`` the boolean mask of surviving terms.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
    p, m = X.shape[1], Y.shape[1]
    coef = np.zeros((p, m))
    active = np.ones((p, m), dtype=bool)
    for j in range(m):
        mask = np.ones(p, dtype=bool)
        for _ in range(max_iter):
            if not mask.any():
                break
            c = ridge_solve(X[:, mask], Y[:, j], ridge)
            small = np.abs(c) < threshold
            if not small.any():
                break
            idx = np.flatnonzero(mask)
            mask[idx[small]] = False
        coef[:, j] = 0.0
        if mask.any():
            coef[mask, j] = ridge_solve(X[:, mask], Y[:, j], ridge)
        active[:, j] = mask
        if not mask.any() and np.linalg.norm(Y[:, j]) > 0:
            raise DegenerateRegression(
                f"all dictionary terms were pruned for output {j} but the target is nonzero")
    return coef, active
