"""Finite-size Monte-Carlo laboratory.

Generates two-component mixture data with the centroid fixed along the
all-ones direction, trains weighted ridge-logistic classifiers for
sampled coefficient realizations, forms resampling ensembles, and
measures the empirical counterparts of the asymptotic order parameters
and metrics.

Randomness is organized as counter-based streams keyed by
``(master seed, purpose tag, index...)`` so every dataset, coefficient
draw, and test set is independently reproducible.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .config import BiasMode, CoeffScheme, ProblemConfig
from .errors import ConfigurationError, NonConvergenceError

__all__ = [
    "Dataset",
    "TrainedClassifier",
    "EnsembleStats",
    "stream",
    "gen_dataset",
    "draw_coeffs",
    "train_weighted",
    "run_ensemble",
    "concentration_probe",
    "probe_separability",
]

KKT_TOL = 1e-8
MAX_NEWTON = 500
HIST_BINS = 61


def stream(master_seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Counter-based RNG stream for (seed, purpose, index...)."""
    key = [int(master_seed), zlib.crc32(tag.encode()) & 0x7FFFFFFF,
           *[int(i) for i in indices]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True)
class Dataset:
    """Finite mixture sample; rows of ``x_plus`` center at +1/sqrt(n)."""

    n: int
    x_plus: np.ndarray
    x_minus: np.ndarray
    delta: float

    @property
    def m_plus(self) -> int:
        return self.x_plus.shape[0]

    @property
    def m_minus(self) -> int:
        return self.x_minus.shape[0]


@dataclass(frozen=True)
class TrainedClassifier:
    w: np.ndarray
    b: float
    kkt_residual: float
    newton_iters: int


def gen_dataset(n: int, m_plus: int, m_minus: int, delta: float,
                seed: int) -> Dataset:
    """Two balanced-centroid clusters with iid Gaussian noise.

    The asymptotic theory depends on the noise only through its variance
    ``delta``; the simulator fixes the Gaussian choice.
    """
    if min(n, m_plus, m_minus) <= 0:
        raise ConfigurationError("dataset sizes must be positive")
    rng = stream(seed, "dataset")
    root = 1.0 / math.sqrt(n)
    sd = math.sqrt(delta)
    x_plus = root + sd * rng.standard_normal((m_plus, n))
    x_minus = -root + sd * rng.standard_normal((m_minus, n))
    return Dataset(n=n, x_plus=x_plus, x_minus=x_minus, delta=delta)


def _draw_one(scheme: CoeffScheme, size: int, rng, exact_count: bool):
    if scheme.kind == "delta":
        return np.full(size, scheme.gamma)
    if scheme.kind == "bernoulli":
        if exact_count:
            kept = int(round(scheme.mu * size))
            c = np.zeros(size)
            c[rng.permutation(size)[:kept]] = 1.0
            return c
        return (rng.random(size) < scheme.mu).astype(float)
    if scheme.kind == "poisson":
        return rng.poisson(scheme.mu, size).astype(float)
    raise ConfigurationError(f"unknown scheme {scheme!r}")


def draw_coeffs(scheme_plus: CoeffScheme, scheme_minus: CoeffScheme,
                m_plus: int, m_minus: int, seed, exact_count: bool = False):
    """Coefficient vector (positives first).  ``exact_count`` draws a
    uniform subset of exactly ``round(mu * m_minus)`` negatives instead of
    iid keep/drop decisions (finite-size variant only)."""
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "coeff")
    c_plus = _draw_one(scheme_plus, m_plus, rng, False)
    c_minus = _draw_one(scheme_minus, m_minus, rng, exact_count)
    return np.concatenate([c_plus, c_minus])


def _objective(h, y, c, quad):
    # sum c_i * softplus(-y_i h_i) + ridge term computed by the caller
    return float(np.dot(c, np.logaddexp(0.0, -y * h))) + quad


def _newton_step_dual(G, h, y, c, lam, a, estimate_bias):
    sig = _sigmoid(-(y * h))
    g1 = c * (-y * sig)                      # d/dh of the data term
    d = c * sig * (1.0 - sig)
    grad_a = G @ (g1 + lam * a)
    A = G * d[None, :]
    H_aa = A @ G + lam * G
    if estimate_bias:
        Gd = G @ d
        H = np.block([[H_aa, Gd[:, None]], [Gd[None, :], np.array([[d.sum()]])]])
        grad = np.concatenate([grad_a, [g1.sum()]])
    else:
        H = H_aa
        grad = grad_a
    return grad, H, g1


def _solve_spd(H, grad):
    n = H.shape[0]
    jitter = 0.0
    for _ in range(6):
        try:
            return np.linalg.solve(H + jitter * np.eye(n), grad)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10, 1e-12 * max(np.trace(H) / n, 1.0))
    return np.linalg.lstsq(H + jitter * np.eye(n), grad, rcond=None)[0]


def train_weighted(dataset: Dataset, coeffs: np.ndarray, lam: float,
                   bias_mode: BiasMode, warm=None, tol: float = KKT_TOL,
                   max_iter: int = MAX_NEWTON) -> TrainedClassifier:
    """Minimize the weighted ridge-logistic objective.

    Points with coefficient zero are dropped before training (exactly
    equivalent).  The solve runs in the span of the kept points when
    those are fewer than the dimension, in the weight space otherwise;
    either way the reported KKT residual is the gradient sup-norm of the
    full objective in ``(w, b)``.
    """
    X_all = np.concatenate([dataset.x_plus, dataset.x_minus], axis=0)
    y_all = np.concatenate([np.ones(dataset.m_plus), -np.ones(dataset.m_minus)])
    return _train_core(X_all, y_all, coeffs, lam, bias_mode, dataset.n,
                       warm=warm, gram=None, tol=tol, max_iter=max_iter)


def _train_core(X_all, y_all, coeffs, lam, bias_mode, n, warm=None,
                gram=None, tol=KKT_TOL, max_iter=MAX_NEWTON) -> TrainedClassifier:
    """Shared trainer; ``gram`` may hold the full-sample Gram ``X X^T / n``
    so repeated realizations on one dataset reuse it by slicing."""
    if lam <= 0:
        raise ConfigurationError(f"lambda must be positive, got {lam!r}")
    keep = coeffs > 0
    estimate_bias = bias_mode.estimated
    b_fixed = 0.0 if estimate_bias else bias_mode.value

    if not keep.any():
        # empty objective: ridge alone fixes w = 0; any bias is optimal
        return TrainedClassifier(w=np.zeros(n), b=b_fixed, kkt_residual=0.0,
                                 newton_iters=0)

    X = X_all[keep]
    y = y_all[keep]
    c = coeffs[keep]
    m_kept = X.shape[0]

    if m_kept <= n:
        G = gram[np.ix_(keep, keep)] if gram is not None else (X @ X.T) / n
        return _train_dual(X, y, c, lam, n, estimate_bias, b_fixed, warm,
                           tol, max_iter, G)
    return _train_primal(X, y, c, lam, n, estimate_bias, b_fixed, warm,
                         tol, max_iter)


def _train_dual(X, y, c, lam, n, estimate_bias, b_fixed, warm, tol, max_iter, G):
    root_n = math.sqrt(n)
    a = np.zeros(X.shape[0])
    b = 0.0 if estimate_bias else b_fixed
    if warm is not None:
        # dual image of the warm predictor; keep it only if it actually
        # beats the cold start (a ~ l'/lambda explodes off-optimum)
        w0, b0 = warm
        h = (X @ w0) / root_n + (b0 if estimate_bias else b_fixed)
        sig = _sigmoid(-(y * h))
        a_w = -(c * (-y * sig)) / lam
        b_w = b0 if estimate_bias else b_fixed
        f_cold = _objective(G @ a + b, y, c, 0.5 * lam * float(a @ (G @ a)))
        f_warm = _objective(G @ a_w + b_w, y, c,
                            0.5 * lam * float(a_w @ (G @ a_w)))
        if f_warm < f_cold:
            a, b = a_w, b_w

    for it in range(1, max_iter + 1):
        h = G @ a + b
        grad, H, g1 = _newton_step_dual(G, h, y, c, lam, a, estimate_bias)
        # primal optimality in (w, b)
        kkt = float(np.max(np.abs(X.T @ (g1 + lam * a)))) / root_n
        if estimate_bias:
            kkt = max(kkt, abs(float(g1.sum())))
        if kkt < tol:
            w = (X.T @ a) / root_n
            return TrainedClassifier(w=w, b=b, kkt_residual=kkt, newton_iters=it - 1)
        step = _solve_spd(H, grad)
        if estimate_bias:
            da, db = step[:-1], step[-1]
        else:
            da, db = step, 0.0
        f0 = _objective(h, y, c, 0.5 * lam * float(a @ (G @ a)))
        slope = -float(grad @ step)
        if -slope <= 1e-13 * max(1.0, abs(f0)):
            # predicted decrease below fp resolution: pure Newton phase
            a, b = a - da, b - db
            continue
        t = 1.0
        for _ in range(60):
            a_t = a - t * da
            b_t = b - t * db
            f_t = _objective(G @ a_t + b_t, y, c, 0.5 * lam * float(a_t @ (G @ a_t)))
            if f_t <= f0 + 1e-4 * t * slope:
                break
            t *= 0.5
        a, b = a_t, b_t
    raise NonConvergenceError(
        f"weighted trainer did not reach KKT tolerance in {max_iter} steps")


def _train_primal(X, y, c, lam, n, estimate_bias, b_fixed, warm, tol, max_iter):
    root_n = math.sqrt(n)
    use_cg = n > 8192
    if warm is not None:
        w = warm[0].copy()
        b = warm[1] if estimate_bias else b_fixed
    else:
        w = np.zeros(n)
        b = 0.0 if estimate_bias else b_fixed

    for it in range(1, max_iter + 1):
        h = (X @ w) / root_n + b
        sig = _sigmoid(-(y * h))
        g1 = c * (-y * sig)
        grad_w = (X.T @ g1) / root_n + lam * w
        grad_b = float(g1.sum())
        kkt = float(np.max(np.abs(grad_w)))
        if estimate_bias:
            kkt = max(kkt, abs(grad_b))
        if kkt < tol:
            return TrainedClassifier(w=w, b=b, kkt_residual=kkt, newton_iters=it - 1)
        d = c * sig * (1.0 - sig)
        if estimate_bias:
            grad = np.concatenate([grad_w, [grad_b]])
        else:
            grad = grad_w
        if use_cg:
            step = _cg_newton(X, d, lam, n, grad, estimate_bias)
        else:
            Xd = X * d[:, None]
            H_ww = (X.T @ Xd) / n + lam * np.eye(n)
            if estimate_bias:
                Xdb = (X.T @ d) / root_n
                H = np.block([[H_ww, Xdb[:, None]],
                              [Xdb[None, :], np.array([[d.sum()]])]])
            else:
                H = H_ww
            step = _solve_spd(H, grad)
        if estimate_bias:
            dw, db = step[:-1], step[-1]
        else:
            dw, db = step, 0.0
        f0 = _objective(h, y, c, 0.5 * lam * float(w @ w))
        slope = -float(grad @ step)
        if -slope <= 1e-13 * max(1.0, abs(f0)):
            w, b = w - dw, b - db
            continue
        t = 1.0
        for _ in range(60):
            w_t = w - t * dw
            b_t = b - t * db
            f_t = _objective((X @ w_t) / root_n + b_t, y, c, 0.5 * lam * float(w_t @ w_t))
            if f_t <= f0 + 1e-4 * t * slope:
                break
            t *= 0.5
        w, b = w_t, b_t
    raise NonConvergenceError(
        f"weighted trainer did not reach KKT tolerance in {max_iter} steps")


def _cg_newton(X, d, lam, n, grad, estimate_bias):
    from scipy.sparse.linalg import LinearOperator, cg

    root_n = math.sqrt(n)
    size = n + (1 if estimate_bias else 0)

    def matvec(p):
        pw = p[:n]
        hb = 0.0
        hp = X @ pw / root_n
        if estimate_bias:
            hp = hp + p[n]
        core = X.T @ (d * hp) / root_n + lam * pw
        if estimate_bias:
            hb = float(np.dot(d, hp))
            return np.concatenate([core, [hb]])
        return core

    op = LinearOperator((size, size), matvec=matvec)
    step, _ = cg(op, grad, rtol=1e-10, maxiter=10 * size)
    return step


def _sigmoid(z):
    t = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


@dataclass(frozen=True)
class EnsembleStats:
    """Empirical order parameters and metrics of a k-ensemble."""

    k: int
    q_emp: float
    m_emp: float
    v_emp: float
    b_emp: float
    q_bar_emp: float
    s_emp: float
    r_emp: float
    f_emp: float
    s_se: float
    r_se: float
    f_se: float
    logit_var_plus: float
    logit_var_minus: float
    hist_plus: np.ndarray | None
    hist_minus: np.ndarray | None
    logits_plus: np.ndarray | None = None
    logits_minus: np.ndarray | None = None

    def as_rows(self):
        return {
            "k": self.k, "q_emp": self.q_emp, "m_emp": self.m_emp,
            "v_emp": self.v_emp, "b_emp": self.b_emp,
            "q_bar_emp": self.q_bar_emp, "s_emp": self.s_emp,
            "r_emp": self.r_emp, "f_emp": self.f_emp, "s_se": self.s_se,
            "r_se": self.r_se, "f_se": self.f_se,
            "logit_var_plus": self.logit_var_plus,
            "logit_var_minus": self.logit_var_minus,
        }


def _histogram(samples: np.ndarray) -> np.ndarray:
    counts, edges = np.histogram(samples, bins=HIST_BINS)
    mass = counts / counts.sum()
    return np.column_stack([edges[:-1], edges[1:], mass])


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _expected_kept(scheme: CoeffScheme, size: int) -> float:
    if scheme.kind == "delta":
        return float(size) if scheme.gamma > 0 else 0.0
    if scheme.kind == "bernoulli":
        return scheme.mu * size
    return (1.0 - math.exp(-scheme.mu)) * size


def run_ensemble(dataset: Dataset, config: ProblemConfig, k_list,
                 n_test: int, seed: int, exact_count: bool = False,
                 chunk: int = 2048, return_logits: bool = False) -> dict[int, EnsembleStats]:
    """Train ``max(k_list)`` classifiers on independent coefficient draws
    and measure, for each requested ensemble size, the empirical order
    parameters, test metrics, and averaged-logit histograms.

    ``n_test = 0`` skips the test pass (order parameters only);
    ``return_logits`` attaches the raw averaged test logits per class.
    """
    k_list = sorted(set(int(k) for k in k_list))
    if not k_list or k_list[0] < 1:
        raise ConfigurationError("k_list must contain positive integers")
    k_max = k_list[-1]
    n = dataset.n
    root_n = math.sqrt(n)

    X_all = np.concatenate([dataset.x_plus, dataset.x_minus], axis=0)
    y_all = np.concatenate([np.ones(dataset.m_plus), -np.ones(dataset.m_minus)])
    m_total = X_all.shape[0]
    # precompute the dataset Gram only when slicing it beats per-training
    # Gram builds: m_total^2 vs k_max * kept^2 columns against X
    kept_est = (_expected_kept(config.coeff_plus, dataset.m_plus)
                + _expected_kept(config.coeff_minus, dataset.m_minus))
    gram = None
    if m_total <= 2 * n and m_total ** 2 <= k_max * kept_est ** 2:
        gram = (X_all @ X_all.T) / n

    W = np.empty((n, k_max))
    bs = np.empty(k_max)
    prev = None
    for j in range(k_max):
        c = draw_coeffs(config.coeff_plus, config.coeff_minus,
                        dataset.m_plus, dataset.m_minus,
                        stream(seed, "coeff", j), exact_count)
        clf = _train_core(X_all, y_all, c, config.lam, config.bias, n,
                          warm=prev, gram=gram)
        W[:, j] = clf.w
        bs[j] = clf.b
        prev = (clf.w, clf.b)

    logits = {}
    if n_test > 0:
        for cls, sign in (("plus", 1.0), ("minus", -1.0)):
            rng = stream(seed, "test_" + cls)
            sd = math.sqrt(dataset.delta)
            acc = np.empty((n_test, k_max))
            row = 0
            while row < n_test:
                size = min(chunk, n_test - row)
                Z = sign / root_n + sd * rng.standard_normal((size, n))
                acc[row:row + size] = (Z @ W) / root_n + bs[None, :]
                row += size
            logits[cls] = acc

    out = {}
    for k in k_list:
        wbar = W[:, :k].mean(axis=1)
        b_emp = float(bs[:k].mean())
        m_emp = float(wbar.mean())
        q_bar_emp = float(wbar @ wbar) / n
        if k >= 2:
            v_emp = float(W[:, :k].var(axis=1, ddof=1).mean())
            # remove the O(v/k) inflation of the squared averaged weights
            q_emp = q_bar_emp - v_emp / k
        else:
            v_emp = float("nan")
            q_emp = q_bar_emp

        if n_test > 0:
            s_plus = logits["plus"][:, :k].mean(axis=1)
            s_minus = logits["minus"][:, :k].mean(axis=1)
            s_emp = float(np.mean(s_plus > 0))
            r_emp = float(np.mean(s_minus < 0))
            f_emp = 2 * s_emp * r_emp / (s_emp + r_emp) if s_emp + r_emp > 0 else 0.0
            s_se = _binomial_se(s_emp, n_test)
            r_se = _binomial_se(r_emp, n_test)
            if s_emp + r_emp > 0:
                ds = 2 * r_emp ** 2 / (s_emp + r_emp) ** 2
                dr = 2 * s_emp ** 2 / (s_emp + r_emp) ** 2
                f_se = math.hypot(ds * s_se, dr * r_se)
            else:
                f_se = 0.0
            stats = EnsembleStats(
                k=k, q_emp=q_emp, m_emp=m_emp, v_emp=v_emp, b_emp=b_emp,
                q_bar_emp=q_bar_emp, s_emp=s_emp, r_emp=r_emp, f_emp=f_emp,
                s_se=s_se, r_se=r_se, f_se=f_se,
                logit_var_plus=float(np.var(s_plus, ddof=1)),
                logit_var_minus=float(np.var(s_minus, ddof=1)),
                hist_plus=_histogram(s_plus), hist_minus=_histogram(s_minus),
                logits_plus=s_plus if return_logits else None,
                logits_minus=s_minus if return_logits else None)
        else:
            stats = EnsembleStats(
                k=k, q_emp=q_emp, m_emp=m_emp, v_emp=v_emp, b_emp=b_emp,
                q_bar_emp=q_bar_emp, s_emp=float("nan"), r_emp=float("nan"),
                f_emp=float("nan"), s_se=float("nan"), r_se=float("nan"),
                f_se=float("nan"), logit_var_plus=float("nan"),
                logit_var_minus=float("nan"), hist_plus=None, hist_minus=None)
        out[k] = stats
    return out


def concentration_probe(config: ProblemConfig, n_list, d_reps: int, seed: int,
                        k_real: int = 32) -> list[dict]:
    """Spread of the empirical order parameters across dataset replicas.

    For each dimension in ``n_list`` (increasing), ``d_reps`` independent
    datasets are generated and the per-replica empirical ``(q, m, v, b)``
    are summarized as mean and standard deviation (std absent when
    ``d_reps == 1``).
    """
    n_list = [int(n) for n in n_list]
    if sorted(n_list) != n_list:
        raise ConfigurationError("n_list must be increasing")
    rows = []
    for n in n_list:
        m_plus = int(round(config.alpha_plus * n))
        m_minus = int(round(config.alpha_minus * n))
        samples = {"q": [], "m": [], "v": [], "b": []}
        for rep in range(d_reps):
            ds = gen_dataset(n, m_plus, m_minus, config.delta,
                             stream(seed, "replica", n, rep).integers(2 ** 31))
            stats = run_ensemble(ds, config, [k_real], n_test=0,
                                 seed=int(stream(seed, "ens", n, rep).integers(2 ** 31)))
            st = stats[k_real]
            samples["q"].append(st.q_emp)
            samples["m"].append(st.m_emp)
            samples["v"].append(st.v_emp)
            samples["b"].append(st.b_emp)
        for name, vals in samples.items():
            arr = np.asarray(vals)
            rows.append({
                "n": n, "quantity": name, "mean": float(arr.mean()),
                "std": float(arr.std(ddof=1)) if d_reps > 1 else float("nan"),
                "reps": d_reps,
            })
    return rows


def probe_separability(alpha_plus: float, delta: float, n: int, reps: int,
                       seed: int) -> float:
    """Fraction of balanced samples (both classes of size
    ``round(alpha_plus * n)``) that are linearly separable with a bias,
    decided by LP feasibility of unit-margin constraints."""
    from scipy.optimize import linprog

    m = max(int(round(alpha_plus * n)), 1)
    separable = 0
    for rep in range(reps):
        ds = gen_dataset(n, m, m, delta, stream(seed, "sep", rep).integers(2 ** 31))
        X = np.concatenate([ds.x_plus, ds.x_minus], axis=0)
        y = np.concatenate([np.ones(m), -np.ones(m)])
        # find (w, b): y (x w + b) >= 1, min 0
        A_ub = -(y[:, None] * np.column_stack([X, np.ones(2 * m)]))
        b_ub = -np.ones(2 * m)
        res = linprog(c=np.zeros(n + 1), A_ub=A_ub, b_ub=b_ub,
                      bounds=[(None, None)] * (n + 1), method="highs")
        if res.status == 0:
            separable += 1
    return separable / reps
