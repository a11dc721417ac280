"""Soft-margin linear SVM trained by pairwise dual coordinate descent.

Minimizes 0.5*||w||^2 + C * sum_i hinge(y_i * (w.x_i + b)) with an
unregularized bias. The dual keeps the equality constraint sum(alpha*y) = 0,
so coordinate steps update maximal-violating pairs (SMO style) under a
seeded permutation schedule. Training stops when the duality gap, evaluated
with the exact hinge-optimal bias for the current weights, falls under the
tolerance, which certifies the primal objective to the same precision.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray  # zero-variance features carry std 1


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    C: float
    duality_gap: float = 0.0
    objective_curve: list = field(default_factory=list)  # dual objective per epoch


def fit_scaler(X):
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return Scaler(mean, std)


def apply_scaler(scaler, X):
    return (np.asarray(X, dtype=np.float64) - scaler.mean) / scaler.std


@njit(cache=True, nogil=True)
def _pair_step(Q, y, alpha, G, C, i, j):
    """Exact two-variable subproblem for i in I_up, j in I_low."""
    a = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
    if a < 1e-12:
        a = 1e-12
    d = (-y[i] * G[i] + y[j] * G[j]) / a
    if y[i] > 0.0:
        lo, hi = -alpha[i], C - alpha[i]
    else:
        lo, hi = alpha[i] - C, alpha[i]
    if y[j] > 0.0:
        lo2, hi2 = alpha[j] - C, alpha[j]
    else:
        lo2, hi2 = -alpha[j], C - alpha[j]
    if lo2 > lo:
        lo = lo2
    if hi2 < hi:
        hi = hi2
    if d < lo:
        d = lo
    elif d > hi:
        d = hi
    if abs(d) < 1e-16:
        return 0
    dai = y[i] * d
    daj = -y[j] * d
    alpha[i] += dai
    alpha[j] += daj
    snap = 1e-12 * (1.0 + C)
    for k in (i, j):
        if alpha[k] < snap:
            alpha[k] = 0.0
        elif alpha[k] > C - snap:
            alpha[k] = C
    n = alpha.shape[0]
    for k in range(n):
        G[k] += Q[k, i] * dai + Q[k, j] * daj
    return 1


@njit(cache=True, nogil=True)
def _smo_sweep(Q, y, alpha, G, C, perm):
    """One pass over the permutation. Each index is paired with the partner
    on the opposite working set that maximizes the second-order gain of the
    two-variable subproblem. Returns the number of successful updates."""
    n = alpha.shape[0]
    steps = 0
    for t in range(n):
        i = perm[t]
        yi = y[i]
        in_up = (yi > 0.0 and alpha[i] < C) or (yi < 0.0 and alpha[i] > 0.0)
        in_low = (yi < 0.0 and alpha[i] < C) or (yi > 0.0 and alpha[i] > 0.0)
        vi = -yi * G[i]
        if in_up:
            best_j = -1
            best_gain = 0.0
            for k in range(n):
                if k == i:
                    continue
                yk = y[k]
                if (yk < 0.0 and alpha[k] < C) or (yk > 0.0 and alpha[k] > 0.0):
                    diff = vi + yk * G[k]
                    if diff > 1e-12:
                        a = Q[i, i] + Q[k, k] - 2.0 * yi * yk * Q[i, k]
                        if a < 1e-12:
                            a = 1e-12
                        gain = diff * diff / a
                        if gain > best_gain:
                            best_gain = gain
                            best_j = k
            if best_j >= 0:
                steps += _pair_step(Q, y, alpha, G, C, i, best_j)
        elif in_low:
            best_j = -1
            best_gain = 0.0
            for k in range(n):
                if k == i:
                    continue
                yk = y[k]
                if (yk > 0.0 and alpha[k] < C) or (yk < 0.0 and alpha[k] > 0.0):
                    diff = -yk * G[k] - vi
                    if diff > 1e-12:
                        a = Q[i, i] + Q[k, k] - 2.0 * yi * yk * Q[i, k]
                        if a < 1e-12:
                            a = 1e-12
                        gain = diff * diff / a
                        if gain > best_gain:
                            best_gain = gain
                            best_j = k
            if best_j >= 0:
                steps += _pair_step(Q, y, alpha, G, C, best_j, i)
    return steps


def _dual_value(Q, alpha):
    return 0.5 * float(alpha @ (Q @ alpha)) - float(alpha.sum())


def _free_set_step(Q, y, alpha, G, C, max_rounds=6):
    """Active-set refinement of the dual between coordinate sweeps.

    Repeatedly solves the equality-constrained subproblem on the working
    set: a clipped step drops the variable that hit its bound, a full step
    reaches the face optimum and then releases the most KKT-violating bound
    variable. Steps that fail to decrease the dual are discarded, so the
    objective stays non-increasing. Terminating with no violation left
    means the full KKT system is satisfied.
    """
    n = alpha.shape[0]
    work = (alpha > 0.0) & (alpha < C)
    snap = 1e-12 * (1.0 + C)
    improved = False
    for _ in range(max_rounds):
        free = np.flatnonzero(work)
        k = free.size
        if k == 0:
            break
        QFF = Q[np.ix_(free, free)]
        A = np.zeros((k + 1, k + 1))
        A[:k, :k] = QFF
        A[:k, :k].flat[:: k + 1] += 1e-10 * (1.0 + np.trace(QFF) / k)
        A[:k, k] = y[free]
        A[k, :k] = y[free]
        rhs = np.concatenate([-G[free], [0.0]])
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            break
        d, nu = sol[:k], sol[k]
        if not np.all(np.isfinite(d)):
            break
        af = alpha[free]
        step = 1.0
        lower = d < 0.0
        upper = d > 0.0
        if lower.any():
            step = min(step, float(np.min(af[lower] / -d[lower])))
        if upper.any():
            step = min(step, float(np.min((C - af[upper]) / d[upper])))
        if step > 0.0 and np.abs(d).max() > 1e-14:
            new_af = np.clip(af + step * d, 0.0, C)
            new_af[new_af < snap] = 0.0
            new_af[new_af > C - snap] = C
            delta = new_af - af
            gain = float(delta @ G[free]) + 0.5 * float(delta @ (QFF @ delta))
            if gain >= -1e-15:
                break
            alpha[free] = new_af
            G += Q[:, free] @ delta
            improved = True
        if step < 1.0:
            work &= (alpha > 0.0) & (alpha < C)
            continue
        # Face optimum reached: release the strongest KKT violators.
        kkt = G + nu * y
        viol = np.where(alpha <= 0.0, -kkt, np.where(alpha >= C, kkt, 0.0))
        viol[work] = 0.0
        worst = float(viol.max())
        if worst <= 1e-10:
            break
        batch = np.flatnonzero(viol >= max(0.5 * worst, 1e-10))
        if batch.size > max(8, n // 8):
            order = np.argsort(-viol[batch], kind="stable")
            batch = batch[order[: max(8, n // 8)]]
        work[batch] = True
    return improved


def _optimal_bias(f, y, C):
    """Exact minimizer of the hinge sum for fixed weights.

    The hinge total is convex piecewise linear in b with slope increasing by
    C at every breakpoint y_k - f_k; the minimum sits between the P-th and
    (P+1)-th smallest breakpoints, P = number of positive labels.
    """
    t = np.sort(y - f)
    p = int(np.sum(y > 0))
    return 0.5 * (t[p - 1] + t[p])


def _objective(w, b, X, y, C):
    margins = 1.0 - y * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(margins, 0.0).sum())


def train_svm(X, y, C=1.0, seed=0, tol=1e-4, max_epochs=1000):
    """Train on (n, d) features with labels in {-1, +1}.

    Deterministic for fixed inputs, C and seed. Raises on single-class data.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) with one label per row")
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    if np.unique(y).size < 2:
        raise ValueError("training requires both classes present")

    n = X.shape[0]
    K = X @ X.T
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    G = -np.ones(n)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 53]))

    curve = []
    gap = np.inf
    for epoch in range(max_epochs):
        perm = rng.permutation(n)
        steps = _smo_sweep(Q, y, alpha, G, C, perm)
        # Give the active-set refinement a deep budget periodically and when
        # the sweeps stall, just enough to walk the face otherwise.
        deep = epoch % 5 == 4 or steps <= max(2, n // 50)
        refined = _free_set_step(Q, y, alpha, G, C,
                                 max_rounds=120 if deep else 6)
        curve.append(_dual_value(Q, alpha))
        w = X.T @ (alpha * y)
        b = _optimal_bias(X @ w, y, C)
        dual = float(alpha.sum()) - 0.5 * float(w @ w)
        gap = _objective(w, b, X, y, C) - dual
        if gap <= tol or (steps == 0 and not refined):
            break

    w = X.T @ (alpha * y)
    b = _optimal_bias(X @ w, y, C)
    return SvmModel(weights=w, bias=float(b), C=float(C),
                    duality_gap=float(gap), objective_curve=curve)


def decision(model, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.weights.shape[0]:
        raise ValueError(
            f"feature length {v.shape[-1]} != model dimension "
            f"{model.weights.shape[0]}")
    return v @ model.weights + model.bias


def predict(model, v):
    """Sign of the decision value; exact zeros map to +1."""
    d = decision(model, v)
    return np.where(d >= 0.0, 1, -1) if isinstance(d, np.ndarray) \
        else (1 if d >= 0.0 else -1)


def accuracy(predicted, actual):
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape or predicted.size == 0:
        raise ValueError("prediction and label lists must match and be non-empty")
    return float(np.mean(predicted == actual))


def save_model(model, path, scaler=None):
    """Text format: dimension, C, bias, one weight per line, scaler appended."""
    lines = [str(model.weights.shape[0]), repr(model.C), repr(model.bias)]
    lines += [repr(float(wi)) for wi in model.weights]
    if scaler is not None:
        lines.append("scaler")
        lines += [repr(float(m)) for m in scaler.mean]
        lines += [repr(float(s)) for s in scaler.std]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    """Returns (model, scaler); scaler is None when the file carries none."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    dim = int(lines[0])
    C = float(lines[1])
    bias = float(lines[2])
    w = np.array([float(x) for x in lines[3:3 + dim]])
    scaler = None
    rest = lines[3 + dim:]
    if rest and rest[0] == "scaler":
        mean = np.array([float(x) for x in rest[1:1 + dim]])
        std = np.array([float(x) for x in rest[1 + dim:1 + 2 * dim]])
        scaler = Scaler(mean, std)
    return SvmModel(weights=w, bias=bias, C=C), scaler
