"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

Public entry points dispatch on :func:`countsplit._backend.get_backend`:

* :func:`binomial_rows` - per-entry Binomial(X_ij, p_i) draws from a
  counter-based stream (SplitMix64 keyed by seed and row-major entry index),
  so the result does not depend on traversal order or thread count.
* :func:`poisson_irls` - log-link Poisson IRLS for many responses sharing one
  design matrix and offset vector.
* :func:`power_iteration` - dominant eigenpair of a symmetric PSD matrix.
* :func:`lloyd` - Lloyd iterations from given initial centres.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import get_backend, njit

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

STATUS_OK = 0
STATUS_MAXITER = 1
STATUS_SEPARATION = 2
STATUS_SINGULAR = 3

# n * min(p, 1 - p) below this uses inversion, at or above it BTRS rejection
INVERSION_CUTOFF = 30.0

_G = np.uint64(GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


def _make_sampler(jit):
    """Build the scalar sampling routines, compiled with ``jit``.

    Passing ``njit`` gives the compiled kernels; passing the identity gives
    the same algorithms as plain Python (numpy uint64 scalars), used by the
    fallback for the rare rejection-sampled entries.
    """

    @jit
    def mix64(z):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    @jit
    def entry_state(key, idx):
        return mix64(key + (np.uint64(idx) + np.uint64(1)) * _G)

    @jit
    def uniform(state, k):
        x = mix64(state + (np.uint64(k) + np.uint64(1)) * _G)
        return (float(x >> _S11) + 0.5) * _TWO_M53

    @jit
    def inversion(n, p, u):
        q = 1.0 - p
        r = p / q
        f = math.exp(n * math.log(q))
        x = 0
        while u > f:
            u -= f
            x += 1
            if x >= n:
                return n
            f *= r * (n - x + 1) / x
        return x

    @jit
    def btrs(n, p, state):
        q = 1.0 - p
        spq = math.sqrt(n * p * q)
        b = 1.15 + 2.53 * spq
        a = -0.0873 + 0.0248 * b + 0.01 * p
        c = n * p + 0.5
        v_r = 0.92 - 4.2 / b
        alpha = (2.83 + 5.1 / b) * spq
        lpq = math.log(p / q)
        m = math.floor((n + 1) * p)
        h = math.lgamma(m + 1.0) + math.lgamma(n - m + 1.0)
        draw = 1
        while True:
            u = uniform(state, draw) - 0.5
            v = uniform(state, draw + 1)
            draw += 2
            us = 0.5 - abs(u)
            k = math.floor((2.0 * a / us + b) * u + c)
            if k < 0 or k > n:
                continue
            if us >= 0.07 and v <= v_r:
                return int(k)
            v = math.log(v * alpha / (a / (us * us) + b))
            if v <= h - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0) + (k - m) * lpq:
                return int(k)

    @jit
    def draw_binomial(n, p, state):
        if n <= 0 or p <= 0.0:
            return 0
        if p >= 1.0:
            return n
        pp = p if p <= 0.5 else 1.0 - p
        if n * pp < INVERSION_CUTOFF:
            x = inversion(n, pp, uniform(state, 0))
        else:
            x = btrs(n, pp, state)
        return x if p <= 0.5 else n - x

    return {
        "mix64": mix64,
        "entry_state": entry_state,
        "uniform": uniform,
        "inversion": inversion,
        "btrs": btrs,
        "draw_binomial": draw_binomial,
    }


_py = _make_sampler(lambda f: f)
_nb = _make_sampler(njit)
_draw_binomial_nb = _nb["draw_binomial"]
_entry_state_nb = _nb["entry_state"]


def stream_key(seed: int, stream: int = 0) -> int:
    """Derive a 64-bit stream key from a user seed and a stream id."""
    with np.errstate(over="ignore"):
        a = _py["mix64"](np.uint64(int(seed) & MASK64))
        b = _py["mix64"](np.uint64((int(stream) * GOLDEN + 1) & MASK64))
    return int(a ^ b)


@njit(cache=False)
def _binomial_rows_nb(counts, row_probs, key):
    n_rows, n_cols = counts.shape
    out = np.zeros((n_rows, n_cols), dtype=np.int64)
    ukey = np.uint64(key)
    for i in range(n_rows):
        p = row_probs[i]
        for j in range(n_cols):
            c = counts[i, j]
            if c == 0:
                continue
            state = _entry_state_nb(ukey, i * n_cols + j)
            out[i, j] = _draw_binomial_nb(c, p, state)
    return out


def _mix64_vec(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _binomial_rows_np(counts, row_probs, key):
    n_rows, n_cols = counts.shape
    flat_n = counts.ravel()
    p = np.repeat(row_probs, n_cols)
    out = np.zeros(flat_n.size, dtype=np.int64)

    active = (flat_n > 0) & (p > 0.0)
    full = active & (p >= 1.0)
    out[full] = flat_n[full]
    active &= ~full
    flip = p > 0.5
    pp = np.where(flip, 1.0 - p, p)
    inv = active & (flat_n * pp < INVERSION_CUTOFF)
    rej = active & ~inv

    with np.errstate(over="ignore"):
        idx = np.flatnonzero(inv).astype(np.uint64)
        states = _mix64_vec(np.uint64(key) + (idx + np.uint64(1)) * _G)
        x = _mix64_vec(states + np.uint64(1) * _G)
    u = ((x >> _S11).astype(np.float64) + 0.5) * _TWO_M53

    nn = flat_n[inv]
    q = 1.0 - pp[inv]
    r = pp[inv] / q
    # scalar libm calls keep this bit-identical to the compiled kernel
    logq = np.array([math.log(v) for v in q])
    f = np.array([math.exp(v) for v in nn * logq])
    draws = np.zeros(nn.size, dtype=np.int64)
    live = u > f
    while live.any():
        u[live] -= f[live]
        draws[live] += 1
        done = live & (draws >= nn)
        draws[done] = nn[done]
        live &= ~done
        d = draws[live]
        f[live] *= r[live] * (nn[live] - d + 1) / d
        live &= u > f
    out[inv] = np.where(flip[inv], nn - draws, draws)

    if rej.any():
        with np.errstate(over="ignore"):
            for e in np.flatnonzero(rej):
                state = _py["entry_state"](np.uint64(key), int(e))
                k = _py["btrs"](int(flat_n[e]), float(pp[e]), state)
                out[e] = flat_n[e] - k if flip[e] else k
    return out.reshape(n_rows, n_cols)


def binomial_rows(counts: np.ndarray, row_probs: np.ndarray, key: int) -> np.ndarray:
    """Draw ``Binomial(counts[i, j], row_probs[i])`` for every entry."""
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    row_probs = np.ascontiguousarray(row_probs, dtype=np.float64)
    if get_backend() == "numba":
        return _binomial_rows_nb(counts, row_probs, np.uint64(key))
    return _binomial_rows_np(counts, row_probs, key)


# --------------------------------------------------------------------------
# Poisson IRLS
# --------------------------------------------------------------------------


@njit(cache=True)
def _chol_solve_inv(M, rhs, want_inv):
    q = M.shape[0]
    L = np.zeros((q, q))
    for i in range(q):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False, rhs, M
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.zeros(q)
    for i in range(q):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.zeros(q)
    for i in range(q - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, q):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    inv = np.zeros((q, q))
    if want_inv:
        for c in range(q):
            e = np.zeros(q)
            e[c] = 1.0
            for i in range(q):
                s = e[i]
                for k in range(i):
                    s -= L[i, k] * e[k]
                e[i] = s / L[i, i]
            for i in range(q - 1, -1, -1):
                s = e[i]
                for k in range(i + 1, q):
                    s -= L[k, i] * e[k]
                e[i] = s / L[i, i]
            inv[:, c] = e
    return True, x, inv


@njit(cache=True)
def _poisson_dev_nb(A, log_off, y, b, ylogy):
    n, q = A.shape
    dev = 0.0
    for i in range(n):
        eta = log_off[i]
        for c in range(q):
            eta += A[i, c] * b[c]
        mu = math.exp(eta)
        dev += mu - y[i] * eta
    return 2.0 * (dev + ylogy)


@njit(cache=True)
def _poisson_irls_nb(A, log_off, Y, tol, maxit):
    n, q = A.shape
    m = Y.shape[1]
    beta = np.full((m, q), np.nan)
    se = np.full((m, q), np.nan)
    dev_out = np.full(m, np.nan)
    iters = np.zeros(m, dtype=np.int64)
    status = np.zeros(m, dtype=np.int64)
    off_sum = 0.0
    for i in range(n):
        off_sum += math.exp(log_off[i])
    for g in range(m):
        y = Y[:, g]
        ysum = 0.0
        ylogy = 0.0
        for i in range(n):
            ysum += y[i]
            if y[i] > 0.0:
                ylogy += y[i] * math.log(y[i]) - y[i]
        if ysum <= 0.0:
            status[g] = 2
            continue
        b = np.zeros(q)
        b[0] = math.log((ysum + 0.1) / off_sum)
        dev_old = _poisson_dev_nb(A, log_off, y, b, ylogy)
        st = 1
        it = 0
        while it < maxit:
            it += 1
            XtWX = np.zeros((q, q))
            XtWz = np.zeros(q)
            for i in range(n):
                eta = 0.0
                for c in range(q):
                    eta += A[i, c] * b[c]
                mu = math.exp(eta + log_off[i])
                z = eta + (y[i] - mu) / mu
                for c in range(q):
                    wa = mu * A[i, c]
                    XtWz[c] += wa * z
                    for d in range(c + 1):
                        XtWX[c, d] += wa * A[i, d]
            for c in range(q):
                for d in range(c + 1, q):
                    XtWX[c, d] = XtWX[d, c]
            ok, b_new, _ = _chol_solve_inv(XtWX, XtWz, False)
            if not ok:
                st = 3
                break
            dev_new = _poisson_dev_nb(A, log_off, y, b_new, ylogy)
            halvings = 0
            while (not math.isfinite(dev_new) or dev_new > dev_old) and halvings < 30:
                for c in range(q):
                    b_new[c] = 0.5 * (b_new[c] + b[c])
                dev_new = _poisson_dev_nb(A, log_off, y, b_new, ylogy)
                halvings += 1
            b = b_new
            if not math.isfinite(dev_new):
                st = 2
                break
            if abs(dev_new - dev_old) / (abs(dev_new) + 0.1) < tol:
                dev_old = dev_new
                st = 0
                break
            dev_old = dev_new
        iters[g] = it
        if st == 2 or st == 3:
            status[g] = st
            continue
        XtWX = np.zeros((q, q))
        bad = False
        for i in range(n):
            eta = log_off[i]
            for c in range(q):
                eta += A[i, c] * b[c]
            mu = math.exp(eta)
            if not (mu > 1e-300) or not (mu < 1e300):
                bad = True
            for c in range(q):
                for d in range(c + 1):
                    XtWX[c, d] += mu * A[i, c] * A[i, d]
        if bad:
            status[g] = 2
            continue
        for c in range(q):
            for d in range(c + 1, q):
                XtWX[c, d] = XtWX[d, c]
        ok, _, inv = _chol_solve_inv(XtWX, np.zeros(q), True)
        if not ok:
            status[g] = 3
            continue
        for c in range(q):
            beta[g, c] = b[c]
            se[g, c] = math.sqrt(inv[c, c]) if inv[c, c] > 0.0 else np.nan
        dev_out[g] = dev_old
        status[g] = st
    return beta, se, dev_out, iters, status


def _poisson_dev_np(A, log_off, Y, B, ylogy):
    eta = log_off[:, None] + A @ B.T
    with np.errstate(over="ignore"):
        return 2.0 * ((np.exp(eta) - Y * eta).sum(axis=0) + ylogy)


def _poisson_irls_np(A, log_off, Y, tol, maxit):
    n, q = A.shape
    m = Y.shape[1]
    beta = np.full((m, q), np.nan)
    se = np.full((m, q), np.nan)
    dev_out = np.full(m, np.nan)
    iters = np.zeros(m, dtype=np.int64)
    status = np.full(m, STATUS_MAXITER, dtype=np.int64)

    ysum = Y.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogy = np.where(Y > 0, Y * np.log(np.where(Y > 0, Y, 1.0)) - Y, 0.0).sum(axis=0)
    status[ysum <= 0] = STATUS_SEPARATION
    B = np.zeros((m, q))
    B[:, 0] = np.log((ysum + 0.1) / np.exp(log_off).sum())
    dev_old = _poisson_dev_np(A, log_off, Y, B, ylogy)
    live = ysum > 0

    for _ in range(maxit):
        if not live.any():
            break
        g = np.flatnonzero(live)
        iters[g] += 1
        Bg = B[g]
        eta = A @ Bg.T
        with np.errstate(over="ignore"):
            mu = np.exp(eta + log_off[:, None])
        z = eta + (Y[:, g] - mu) / mu
        XtWX = np.einsum("ic,ig,id->gcd", A, mu, A)
        XtWz = np.einsum("ic,ig->gc", A, mu * z)
        try:
            chol = np.linalg.cholesky(XtWX)
            bad = np.zeros(g.size, dtype=bool)
        except np.linalg.LinAlgError:
            ev = np.linalg.eigvalsh(XtWX)
            bad = ~(ev[:, 0] > 0)
            chol = np.linalg.cholesky(np.where(bad[:, None, None], np.eye(q), XtWX))
        if bad.any():
            status[g[bad]] = STATUS_SINGULAR
            live[g[bad]] = False
        ok = ~bad
        g, Bg, chol, XtWz = g[ok], Bg[ok], chol[ok], XtWz[ok]
        if g.size == 0:
            continue
        ytmp = np.linalg.solve(chol, XtWz[:, :, None])
        B_new = np.linalg.solve(np.swapaxes(chol, 1, 2), ytmp)[:, :, 0]
        dev_new = _poisson_dev_np(A, log_off, Y[:, g], B_new, ylogy[g])
        for _h in range(30):
            worse = ~np.isfinite(dev_new) | (dev_new > dev_old[g])
            if not worse.any():
                break
            B_new[worse] = 0.5 * (B_new[worse] + Bg[worse])
            dev_new[worse] = _poisson_dev_np(
                A, log_off, Y[:, g[worse]], B_new[worse], ylogy[g[worse]]
            )
        B[g] = B_new
        nonfinite = ~np.isfinite(dev_new)
        status[g[nonfinite]] = STATUS_SEPARATION
        live[g[nonfinite]] = False
        conv = ~nonfinite & (np.abs(dev_new - dev_old[g]) / (np.abs(dev_new) + 0.1) < tol)
        status[g[conv]] = STATUS_OK
        live[g[conv]] = False
        dev_old[g[~nonfinite]] = dev_new[~nonfinite]

    fin = np.flatnonzero((status == STATUS_OK) | (status == STATUS_MAXITER))
    if fin.size:
        with np.errstate(over="ignore"):
            mu = np.exp(log_off[:, None] + A @ B[fin].T)
        sep = ~((mu > 1e-300) & (mu < 1e300)).all(axis=0)
        status[fin[sep]] = STATUS_SEPARATION
        keep = ~sep
        fin, mu = fin[keep], mu[:, keep]
        info = np.einsum("ic,ig,id->gcd", A, mu, A)
        ev = np.linalg.eigvalsh(info) if fin.size else np.zeros((0, q))
        sing = ~(ev[:, 0] > 0) if fin.size else np.zeros(0, dtype=bool)
        status[fin[sing]] = STATUS_SINGULAR
        fin, info = fin[~sing], info[~sing]
        if fin.size:
            cov = np.linalg.inv(info)
            beta[fin] = B[fin]
            se[fin] = np.sqrt(np.diagonal(cov, axis1=1, axis2=2))
            dev_out[fin] = dev_old[fin]
    return beta, se, dev_out, iters, status


def poisson_irls(A, log_off, Y, tol=1e-8, maxit=25):
    """Fit log-link Poisson GLMs for every column of ``Y`` on design ``A``.

    Returns ``(beta, se, deviance, iterations, status)`` with one row or entry
    per response column; status uses the ``STATUS_*`` codes.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    log_off = np.ascontiguousarray(log_off, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if get_backend() == "numba":
        return _poisson_irls_nb(A, log_off, Y, float(tol), int(maxit))
    return _poisson_irls_np(A, log_off, Y, float(tol), int(maxit))


# --------------------------------------------------------------------------
# Power iteration
# --------------------------------------------------------------------------


@njit(cache=True)
def _power_iteration_nb(C, v0, tol, maxit):
    v = v0 / math.sqrt((v0 * v0).sum())
    w = np.dot(C, v)
    lam_old = (v * w).sum()
    it = 0
    while it < maxit:
        it += 1
        nrm = math.sqrt((w * w).sum())
        if nrm == 0.0:
            return 0.0, v, it
        v = w / nrm
        w = np.dot(C, v)
        lam = (v * w).sum()
        if abs(lam - lam_old) <= tol * abs(lam):
            return lam, v, it
        lam_old = lam
    return lam_old, v, it


def _power_iteration_np(C, v0, tol, maxit):
    v = v0 / np.linalg.norm(v0)
    w = C @ v
    lam_old = float(v @ w)
    it = 0
    while it < maxit:
        it += 1
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, v, it
        v = w / nrm
        w = C @ v
        lam = float(v @ w)
        if abs(lam - lam_old) <= tol * abs(lam):
            return lam, v, it
        lam_old = lam
    return lam_old, v, it


def power_iteration(C, v0, tol=1e-10, maxit=10_000):
    """Return ``(eigenvalue, unit eigenvector, iterations)`` for the top pair."""
    C = np.ascontiguousarray(C, dtype=np.float64)
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    if get_backend() == "numba":
        lam, v, it = _power_iteration_nb(C, v0, float(tol), int(maxit))
    else:
        lam, v, it = _power_iteration_np(C, v0, float(tol), int(maxit))
    return float(lam), np.asarray(v), int(it)


# --------------------------------------------------------------------------
# Lloyd iterations
# --------------------------------------------------------------------------


@njit(cache=True)
def _assign_nb(X, centers, labels):
    n, d = X.shape
    k = centers.shape[0]
    obj = 0.0
    changed = False
    mind = np.empty(n)
    for i in range(n):
        best = np.inf
        bc = 0
        for c in range(k):
            s = 0.0
            for t in range(d):
                diff = X[i, t] - centers[c, t]
                s += diff * diff
            if s < best:
                best = s
                bc = c
        if labels[i] != bc:
            changed = True
        labels[i] = bc
        mind[i] = best
        obj += best
    return obj, changed, mind


@njit(cache=True)
def _lloyd_nb(X, centers, maxit):
    n, d = X.shape
    k = centers.shape[0]
    centers = centers.copy()
    labels = np.full(n, -1, dtype=np.int64)
    history = np.empty(maxit + 1)
    it = 0
    obj, changed, mind = _assign_nb(X, centers, labels)
    history[0] = obj
    while it < maxit:
        it += 1
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            counts[labels[i]] += 1
        for c in range(k):
            if counts[c] == 0:
                big = 0
                for cc in range(k):
                    if counts[cc] > counts[big]:
                        big = cc
                far = -1
                fd = -1.0
                for i in range(n):
                    if labels[i] == big and mind[i] > fd:
                        fd = mind[i]
                        far = i
                labels[far] = c
                mind[far] = 0.0
                counts[big] -= 1
                counts[c] += 1
        sums = np.zeros((k, d))
        for i in range(n):
            for t in range(d):
                sums[labels[i], t] += X[i, t]
        for c in range(k):
            for t in range(d):
                centers[c, t] = sums[c, t] / counts[c]
        obj, changed, mind = _assign_nb(X, centers, labels)
        history[it] = obj
        if not changed:
            break
    return labels, centers, obj, history[: it + 1]


def _assign_np(X, centers):
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    mind = d2[np.arange(X.shape[0]), labels]
    return labels, mind


def _lloyd_np(X, centers, maxit):
    k = centers.shape[0]
    centers = centers.copy()
    labels, mind = _assign_np(X, centers)
    history = [float(mind.sum())]
    for _ in range(maxit):
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c] == 0:
                big = int(np.argmax(counts))
                members = np.flatnonzero(labels == big)
                far = members[np.argmax(mind[members])]
                labels[far] = c
                mind[far] = 0.0
                counts[big] -= 1
                counts[c] += 1
        for c in range(k):
            centers[c] = X[labels == c].mean(axis=0)
        new_labels, mind = _assign_np(X, centers)
        history.append(float(mind.sum()))
        changed = bool((new_labels != labels).any())
        labels = new_labels
        if not changed:
            break
    return labels, centers, history[-1], np.array(history)


def lloyd(X, centers, maxit=300):
    """Run Lloyd's algorithm; returns ``(labels, centers, objective, history)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if get_backend() == "numba":
        labels, c, obj, hist = _lloyd_nb(X, centers, int(maxit))
    else:
        labels, c, obj, hist = _lloyd_np(X, centers, int(maxit))
    return np.asarray(labels, dtype=np.int64), np.asarray(c), float(obj), np.asarray(hist)
