"""Brute-force reference computations: explicit loops and refits, no shortcuts."""

import numpy as np


def projection(cols: np.ndarray) -> np.ndarray:
    cols = np.atleast_2d(np.asarray(cols, dtype=float).T).T
    return cols @ np.linalg.pinv(cols)


def jack_ratio(c: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    n = len(x)
    num = sum(c[i, j] * x[i] * y[j] for i in range(n) for j in range(n) if i != j)
    den = sum(c[i, j] * x[i] * x[j] for i in range(n) for j in range(n) if i != j)
    return num / den


def jive1_refit(Z: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Leave-one-out first stage Z*_i = π̂_(−i)′Z_i, then Σ Z*_i Y_i / Σ Z*_i X_i."""
    n = len(x)
    fitted = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        pi, *_ = np.linalg.lstsq(Z[keep], x[keep], rcond=None)
        fitted[i] = Z[i] @ pi
    return float(fitted @ y / (fitted @ x))


def phi1(e: np.ndarray, p: np.ndarray, k: int) -> float:
    n = len(e)
    return 2.0 / k * sum(p[i, j] ** 2 * e[i] ** 2 * e[j] ** 2 for i in range(n) for j in range(n) if i != j)


def _cross_fit(p: np.ndarray, m: np.ndarray, i: int, j: int) -> float:
    return p[i, j] ** 2 / (m[i, i] * m[j, j] + m[i, j] ** 2)


def phi2(e: np.ndarray, p: np.ndarray, k: int) -> float:
    n = len(e)
    m = np.eye(n) - p
    me = m @ e
    return 2.0 / k * sum(
        _cross_fit(p, m, i, j) * e[i] * me[i] * e[j] * me[j]
        for i in range(n)
        for j in range(n)
        if i != j
    )


def phi3(e: np.ndarray, Z: np.ndarray, k: int) -> float:
    """Leave-three-out normalizer by explicit refits for every (i, j, k) triple."""
    n = len(e)
    p = projection(Z)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            keep = np.array([r not in (i, j) for r in range(n)])
            gram_inv = np.linalg.inv(Z[keep].T @ Z[keep])
            p_ij = Z @ gram_inv @ Z.T
            coef, *_ = np.linalg.lstsq(Z[keep], e[keep], rcond=None)
            inner = e[i] * (e[j] - Z[j] @ coef)
            for kk in range(n):
                if kk in (i, j):
                    continue
                keep3 = keep.copy()
                keep3[kk] = False
                coef3, *_ = np.linalg.lstsq(Z[keep3], e[keep3], rcond=None)
                inner += -p_ij[i, kk] * e[kk] * (e[j] - Z[j] @ coef3)
            total += p[i, j] ** 2 * e[i] * e[j] * inner
    return 2.0 / k * total


def psi1(e: np.ndarray, x: np.ndarray, p: np.ndarray, k: int) -> float:
    n = len(e)
    first = sum(e[i] ** 2 * sum(p[i, j] * x[j] for j in range(n) if j != i) ** 2 for i in range(n))
    second = sum(
        p[i, j] ** 2 * x[i] * e[i] * x[j] * e[j] for i in range(n) for j in range(n) if i != j
    )
    return (first + second) / k


def psi2(e: np.ndarray, x: np.ndarray, p: np.ndarray, k: int) -> float:
    n = len(e)
    m = np.eye(n) - p
    me = m @ e
    first = sum(
        e[i] * me[i] / m[i, i] * sum(p[i, j] * x[j] for j in range(n) if j != i) ** 2 for i in range(n)
    )
    second = sum(
        _cross_fit(p, m, i, j) * x[i] * me[i] * x[j] * me[j]
        for i in range(n)
        for j in range(n)
        if i != j
    )
    return (first + second) / k


def theta(m_w: np.ndarray, p_perp: np.ndarray) -> np.ndarray:
    return np.linalg.solve(m_w**2, np.diag(p_perp))


def zero_diag_weights(Z: np.ndarray, W: np.ndarray) -> np.ndarray:
    n = Z.shape[0]
    m_w = np.eye(n) - projection(W)
    p_perp = projection(m_w @ Z)
    th = theta(m_w, p_perp)
    return p_perp - m_w @ np.diag(th) @ m_w


def phi_w(e: np.ndarray, a: np.ndarray, Z: np.ndarray, W: np.ndarray, k: int) -> float:
    n = len(e)
    m = np.eye(n) - projection(np.hstack([Z, W]))
    s = e * (m @ e)
    return 2.0 / k * sum(
        a[i, j] ** 2 / (m[i, i] * m[j, j] + m[i, j] ** 2) * s[i] * s[j]
        for i in range(n)
        for j in range(n)
        if i != j
    )
