"""Gradient descent on finite-(n, d) realizations of the Gaussian risk.

f^g_i(a, W) = (1/m) sum_j a_j sum_k c_k <J_i^(k), w_j^{(x)k}> with iid N(0,1)
tensors J^(k). Tensors are symmetrized once at sampling time (S = sum over
index permutations) so that <J, w^k> = <S, w^k>/k! and its gradient is
S[w^(k-1)]/(k-1)!; this is exact for the non-symmetric J.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from itertools import permutations

import numpy as np

from .engine import SolverAbort

MEMORY_BUDGET = 2 * 1024 ** 3


def realization_rng(seed):
    # counter-based generator, one independent stream per realization seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _symmetrize(J):
    k = J.ndim - 1
    if k <= 1:
        return J
    S = np.zeros_like(J)
    for p in permutations(range(1, k + 1)):
        S += J.transpose((0,) + p)
    return S


class TensorLandscape:
    def __init__(self, n, d, kernel, link, tensors, u, phi_g, eps):
        self.n, self.d = n, d
        self.kernel, self.link = kernel, link
        self.c = kernel.c
        self.S = tensors  # dict k -> symmetrized tensor, shape (n, d, ..., d)
        self.u = u
        self.phi_g = phi_g
        self.eps = eps
        self.y = phi_g + eps

    def features(self, W):
        """G[i, j] = sum_k c_k <J_i^(k), w_j^k> and the per-degree partial
        contractions needed for the gradient."""
        n, m = self.n, W.shape[0]
        G = np.zeros((n, m))
        parts = {}
        for k, S in self.S.items():
            if k == 1:
                P = S @ W.T  # (n, m)
                G += self.c[1] * P
                parts[1] = None
                continue
            # contract all but one index: Q[i, a, j] = S_i[a, w_j, ..., w_j] / (k-1)!
            X = S.reshape(-1, self.d) @ W.T  # (n*d^(k-1), m)
            for _ in range(k - 2):
                X = X.reshape(-1, self.d, m)
                X = np.einsum("iaj,ja->ij", X, W)
            Q = X.reshape(n, self.d, m) / math.factorial(k - 1)
            G += self.c[k] * np.einsum("iaj,ja->ij", Q, W) / k
            parts[k] = Q
        return G, parts

    def predict(self, a, W):
        G, _ = self.features(W)
        return G @ a / len(a)

    def risk(self, a, W):
        r = self.predict(a, W) - self.y
        return 0.5 * np.dot(r, r) / self.n

    def grad(self, a, W):
        m = len(a)
        G, parts = self.features(W)
        r = G @ a / m - self.y
        ga = G.T @ r / (m * self.n)
        gW = np.zeros_like(W)
        for k, Q in parts.items():
            if k == 1:
                gW += self.c[1] * np.outer(np.ones(m), r @ self.S[1])
            else:
                gW += self.c[k] * np.einsum("i,iaj->ja", r, Q)
        gW *= (a / (m * self.n))[:, None]
        return 0.5 * np.dot(r, r) / self.n, ga, gW, G


def sample_landscape(n, d, kernel, link, seed, memory_budget=MEMORY_BUDGET, dtype=np.float64):
    """One realization of (J^(k), u, phi^g, eps)."""
    rng = realization_rng(seed)
    degs = [k for k in range(1, len(kernel.coeffs)) if kernel.coeffs[k] > 0]
    need = sum(n * d ** k for k in degs) * np.dtype(dtype).itemsize * 2
    if need > memory_budget:
        raise MemoryError("landscape needs %d bytes, budget %d" % (need, memory_budget))
    c = kernel.c
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    tensors = {}
    phi_g = np.zeros(n)
    lc = np.asarray(link.coeffs)
    fk2 = 0.0
    for k in degs:
        J = rng.standard_normal((n,) + (d,) * k, dtype=dtype)
        if k < len(lc) and lc[k] != 0:
            fk = lc[k] / c[k]
            fk2 += fk * fk
            X = J.astype(float)
            for _ in range(k):
                X = X @ u
            phi_g += fk * X
        tensors[k] = _symmetrize(J)
    extra = [k for k in range(1, len(lc)) if lc[k] != 0 and k not in tensors]
    if extra:
        raise ValueError("link has components at degrees %s where h has none" % extra)
    rem = link.phi_norm2 - fk2
    if rem < -1e-12:
        raise ValueError("phi_norm2 smaller than the tensor-shared part of the target")
    if rem > 0:
        phi_g += np.sqrt(rem) * rng.standard_normal(n)
    eps = np.sqrt(link.tau2) * rng.standard_normal(n)
    return TensorLandscape(n, d, kernel, link, tensors, u, phi_g, eps)


def init_weights(C0, d, rng, u=None):
    """Rows with Gram matrix C0, uniformly rotated; if u is given the rows are
    drawn orthogonal to it (v(0) = 0 exactly)."""
    C0 = np.asarray(C0, dtype=float)
    m = len(C0)
    lam, V = np.linalg.eigh(C0)
    L = V * np.sqrt(np.clip(lam, 0, None))
    Z = rng.standard_normal((d, m))
    if u is not None:
        Z -= np.outer(u, u @ Z)
    Q, _ = np.linalg.qr(Z)
    W = L @ Q.T
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def project_sphere(W, eps=1e-8):
    nrm = np.linalg.norm(W, axis=-1, keepdims=True)
    # rows already on the sphere to rounding are left alone, so projecting twice is exact
    nrm = np.where(np.abs(nrm - 1) <= 4 * np.finfo(float).eps, 1.0, nrm)
    return W / np.maximum(nrm, eps)


def gd_run(land, a0, W0, eta_gd, steps, freeze_a=False):
    """Projected GD with the n/d time scaling; returns per-step records."""
    n, d = land.n, land.d
    lr = eta_gd * n / d
    a = np.array(a0, dtype=float)
    W = np.array(W0, dtype=float)
    m = len(a)
    W0 = W.copy()
    out = {"e_tr": np.zeros(steps + 1), "a": np.zeros((steps + 1, m)),
           "C_t0": np.zeros((steps + 1, m, m)), "C_tt": np.zeros((steps + 1, m, m)),
           "v": np.zeros((steps + 1, m))}
    for s in range(steps + 1):
        R, ga, gW, _ = land.grad(a, W)
        out["e_tr"][s] = R
        out["a"][s] = a
        out["C_t0"][s] = W @ W0.T
        out["C_tt"][s] = W @ W.T
        out["v"][s] = W @ land.u
        if s == steps:
            break
        if not freeze_a:
            a = a - lr * ga
        W = project_sphere(W - lr * gW)
        if not np.isfinite(R) or not np.all(np.isfinite(W)):
            raise SolverAbort(s + 1)
    out["t"] = np.arange(steps + 1) * eta_gd
    return out


def _fast_run(K, J1, y, u, c1, c2, a, W, lr, steps, freeze_a):
    """Degree <= 2 GD loop on one landscape. K: (n*d, d) symmetrized quadratic
    tensor (possibly float32) or None, J1: (n, d) or None."""
    m, d = W.shape
    n = len(y)
    W0 = W.copy()
    rec = {"e_tr": np.zeros(steps + 1), "a": np.zeros((steps + 1, m)),
           "C_t0": np.zeros((steps + 1, m, m)), "v": np.zeros((steps + 1, m))}
    tdt = K.dtype if K is not None else J1.dtype
    for s in range(steps + 1):
        Wt = W.astype(tdt, copy=False)
        G = np.zeros((n, m))
        if K is not None:
            KW = (K @ Wt.T).astype(float, copy=False).reshape(n, d, m)
            G += 0.5 * c2 * np.einsum("naj,ja->nj", KW, W)
        if J1 is not None:
            P = (J1 @ Wt.T).astype(float, copy=False)
            G += c1 * P
        r = G @ a / m - y
        R = 0.5 * np.dot(r, r) / n
        rec["e_tr"][s] = R
        rec["a"][s] = a
        rec["C_t0"][s] = W @ W0.T
        rec["v"][s] = W @ u
        if s == steps:
            break
        if not np.isfinite(R):
            raise SolverAbort(s)
        ga = G.T @ r / (m * n)
        gW = np.zeros_like(W)
        if K is not None:
            gW += c2 * (r @ KW.reshape(n, d * m)).reshape(d, m).T
        if J1 is not None:
            gW += c1 * (r.astype(tdt) @ J1).astype(float)[None, :]
        gW *= (a / (m * n))[:, None]
        if not freeze_a:
            a = a - lr * ga
        W = project_sphere(W - lr * gW)
    return rec


def run_batch(seeds, n, d, kernel, link, a0, C0, eta_gd, steps, freeze_a=False,
              tensor_dtype=np.float64):
    """GD trajectories for a list of realization seeds, stacked along axis 0."""
    recs = []
    c = kernel.c
    c1 = c[1] if len(c) > 1 else 0.0
    c2 = c[2] if len(c) > 2 else 0.0
    lr = eta_gd * n / d
    for sd in seeds:
        land = sample_landscape(n, d, kernel, link, sd, dtype=tensor_dtype)
        W0 = init_weights(C0, d, realization_rng([sd, 1]), u=land.u)
        if kernel.degree > 2:
            rec = gd_run(land, a0, W0, eta_gd, steps, freeze_a)
        else:
            K = land.S[2].reshape(n * d, d) if 2 in land.S else None
            J1 = land.S.get(1)
            rec = _fast_run(K, J1, land.y, land.u, c1, c2, np.array(a0, dtype=float),
                            W0, lr, steps, freeze_a)
        recs.append(rec)
    return {k: np.stack([r[k] for r in recs]) for k in ("e_tr", "a", "C_t0", "v")}


def _run_chunk(args):
    return run_batch(*args[0], **args[1])


def mc_average(seeds, n, d, kernel, link, a0, C0, eta_gd, steps, freeze_a=False,
               batch=8, jobs=1, tensor_dtype=np.float64, progress=None):
    """Mean and standard error over realizations, one seed per realization."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two realizations")
    chunks = [seeds[i:i + batch] for i in range(0, len(seeds), batch)]
    kw = dict(freeze_a=freeze_a, tensor_dtype=tensor_dtype)
    tasks = [((ch, n, d, kernel, link, a0, C0, eta_gd, steps), kw) for ch in chunks]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_run_chunk, tasks))
    else:
        parts = []
        for i, t in enumerate(tasks):
            parts.append(_run_chunk(t))
            if progress is not None:
                progress((i + 1) * batch)
    allrec = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    N = len(seeds)
    res = {"t": np.arange(steps + 1) * eta_gd, "n_realizations": N}
    for k, x in allrec.items():
        res[k] = x.mean(axis=0)
        res[k + "_stderr"] = x.std(axis=0, ddof=1) / np.sqrt(N)
    return res
