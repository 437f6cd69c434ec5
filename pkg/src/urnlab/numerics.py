"""Dense real linear algebra and elementary NN math.

Everything here operates on plain float64 numpy arrays.  Matrix-valued
functions accept stacked inputs (..., n, n) and broadcast over the leading
dimensions, which is what the batched training loops rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "skew",
    "skew_adjoint",
    "skew_dim",
    "expm",
    "expm_frechet",
    "expm_backward",
    "softmax_cross_entropy",
    "dropout",
    "AdamState",
    "adam_step",
]

# 1/k! for k = 0..13; degree-13 Taylor kernel coefficients.
_TAYLOR_C = tuple(1.0 / math.factorial(k) for k in range(14))

# Paterson-Stockmeyer split of the degree-13 polynomial in powers of A^4:
# chunk j is _PS_EYE[j] * I + sum_i _PS_COEF[j, i] * A^(i+1).
_PS_COEF = np.array([[_TAYLOR_C[4 * j + i] if 4 * j + i < 14 else 0.0
                      for i in (1, 2, 3)] for j in range(4)])
_PS_EYE = tuple(_TAYLOR_C[4 * j] for j in range(4))

_triu_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _triu_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _triu_cache:
        _triu_cache[n] = np.triu_indices(n, k=1)
    return _triu_cache[n]


def skew_dim(num_entries: int) -> int:
    """Matrix side n such that n(n-1)/2 == num_entries."""
    n = int(round((1.0 + math.sqrt(1.0 + 8.0 * num_entries)) / 2.0))
    if n * (n - 1) // 2 != num_entries:
        raise ValueError(f"{num_entries} is not of the form n(n-1)/2")
    return n


def skew(x: np.ndarray) -> np.ndarray:
    """Pack a vector of length n(n-1)/2 into a skew-symmetric n x n matrix.

    The entries fill the upper triangle row by row; the lower triangle is the
    negated mirror and the diagonal is zero.  Accepts stacked input (..., k).
    """
    x = np.asarray(x, dtype=np.float64)
    n = skew_dim(x.shape[-1])
    rows, cols = _triu_indices(n)
    out = np.zeros(x.shape[:-1] + (n, n), dtype=np.float64)
    out[..., rows, cols] = x
    out[..., cols, rows] = -x
    return out


def skew_adjoint(grad: np.ndarray) -> np.ndarray:
    """Adjoint of ``skew``: project a matrix gradient onto the free entries.

    For the slot (i, j) of entry k the result is grad[i, j] - grad[j, i].
    """
    grad = np.asarray(grad, dtype=np.float64)
    n = _check_square(grad)
    rows, cols = _triu_indices(n)
    return grad[..., rows, cols] - grad[..., cols, rows]


def _check_square(m: np.ndarray) -> int:
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m.shape[-1]


def _one_norm(m: np.ndarray) -> float:
    # Largest absolute column sum, maximised over any stacked dimensions.
    return float(np.abs(m).sum(axis=-2).max()) if m.size else 0.0


def _squarings(norm: float) -> int:
    if norm == 0.0:
        return 0
    return max(0, int(math.ceil(math.log2(norm))) + 2)


def _power_stack(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # (A, A^2, A^3) stacked on a new leading axis, plus A^4.
    powers = np.empty((3,) + a.shape)
    powers[0] = a
    np.matmul(a, a, out=powers[1])
    np.matmul(powers[1], a, out=powers[2])
    return powers, powers[1] @ powers[1]


def _ps_chunks(powers: np.ndarray, coef: np.ndarray,
               eye_terms=None) -> np.ndarray:
    # All four Paterson-Stockmeyer chunk polynomials in one contraction;
    # identity-coefficient terms land on the diagonals only.
    chunks = np.tensordot(coef, powers, axes=1)
    if eye_terms is not None:
        n = powers.shape[-1]
        diag = np.arange(n)
        for j, c in enumerate(eye_terms):
            chunks[j][..., diag, diag] += c
    return chunks


def _taylor13(a: np.ndarray) -> np.ndarray:
    # Degree-13 Taylor polynomial, Paterson-Stockmeyer split in powers of A^4.
    # Requires ||a|| <= 1/4, which the scaling step guarantees.
    powers, a4 = _power_stack(a)
    b = _ps_chunks(powers, _PS_COEF, _PS_EYE)
    t = a4 @ b[3]
    t += b[2]
    t = a4 @ t
    t += b[1]
    q = a4 @ t
    q += b[0]
    return q


def expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a degree-13 kernel.

    The squaring count is max(0, ceil(log2 ||M||_1) + 2), so the kernel always
    sees a matrix of 1-norm at most 1/4.  Stacked inputs share the squaring
    count of the worst member.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_square(m)
    s = _squarings(_one_norm(m))
    q = _taylor13(m / (2.0**s) if s else m)
    for _ in range(s):
        q = q @ q
    return q


def expm_frechet(m: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exponential of M together with its Frechet derivative in direction E.

    Uses the block identity: expm([[M, E], [0, M]]) carries L(M, E) in the
    upper-right n x n block.
    """
    m = np.asarray(m, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    n = _check_square(m)
    if e.shape != m.shape:
        raise ValueError(f"direction shape {e.shape} != matrix shape {m.shape}")
    block = np.zeros(m.shape[:-2] + (2 * n, 2 * n), dtype=np.float64)
    block[..., :n, :n] = m
    block[..., :n, n:] = e
    block[..., n:, n:] = m
    big = expm(block)
    return big[..., :n, :n].copy(), big[..., :n, n:].copy()


def _expm_frechet_coupled(a: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Same value pair as expm_frechet, but via the coupled recurrence on n x n
    # matrices only: differentiate the Taylor kernel, then square in lockstep
    # (Q -> Q^2, L -> QL + LQ).  Used on the training path where the 2n block
    # would dominate the runtime.
    s = _squarings(_one_norm(a))
    if s:
        a = a / (2.0**s)
        e = e / (2.0**s)
    powers, a4 = _power_stack(a)
    b = _ps_chunks(powers, _PS_COEF, _PS_EYE)
    # directional derivatives of the powers: M_k = d/dt (A + tE)^k at t=0
    m = np.empty_like(powers)
    m[0] = e
    np.matmul(a, e, out=m[1])
    m[1] += e @ a
    np.matmul(a, m[1], out=m[2])
    m[2] += e @ powers[1]
    m4 = a @ m[2]
    m4 += e @ powers[2]
    db = _ps_chunks(m, _PS_COEF)
    # forward chunk chain and its derivative, innermost first
    c2 = a4 @ b[3]
    c2 += b[2]
    c1 = a4 @ c2
    c1 += b[1]
    q = a4 @ c1
    q += b[0]
    t = m4 @ b[3]
    t += a4 @ db[3]
    t += db[2]
    u = m4 @ c2
    u += a4 @ t
    u += db[1]
    l = m4 @ c1
    l += a4 @ u
    l += db[0]
    for _ in range(s):
        l = q @ l + l @ q
        q = q @ q
    return q, l


def _matvec(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", a, x)


# C[j][i, l] couples (A^i u)(A^l^T v)^T into the derivative of chunk j; the
# anti-diagonal selector for M_4 reduces to a column flip.
_RANK1_C = np.array([[[_PS_COEF[j, i + l] if i + l <= 2 else 0.0
                       for l in range(4)] for i in range(4)]
                     for j in range(4)])


def _expm_frechet_rank1(a: np.ndarray, u: np.ndarray,
                        v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # (expm(A), L(A, u v^T)) for stacked A (..., n, n) and vectors u, v.
    # The directional derivative of A^k in a rank-1 direction is
    # sum_{i+l=k-1} (A^i u)(A^l^T v)^T, so the whole derivative chain runs on
    # (..., n, 4) blocks; only the final product and the coupled squarings
    # touch dense matrices.  Training-path twin of _expm_frechet_coupled.
    s = _squarings(_one_norm(a))
    if s:
        a = a / (2.0**s)
        u = u / (2.0**s)
    powers, a4 = _power_stack(a)
    b = _ps_chunks(powers, _PS_COEF, _PS_EYE)
    c2 = a4 @ b[3]
    c2 += b[2]
    c1 = a4 @ c2
    c1 += b[1]
    q = a4 @ c1
    q += b[0]
    us = [u]
    vs = [v]
    for i in range(3):
        us.append(_matvec(a, us[i]))
        vs.append(_matvec(np.swapaxes(a, -1, -2), vs[i]))
    u_blk = np.stack(us, axis=-1)                      # (..., n, 4)
    v_blk = np.stack(vs, axis=-1)
    x1 = a4 @ u_blk
    x2 = a4 @ x1
    x = np.concatenate([u_blk, x1, x2, a4 @ x2], axis=-1)
    w = [np.swapaxes(part, -1, -2) @ v_blk for part in (c1, c2, b[3])]
    y = np.concatenate([w[0][..., ::-1] + v_blk @ _RANK1_C[0].T,
                        w[1][..., ::-1] + v_blk @ _RANK1_C[1].T,
                        w[2][..., ::-1] + v_blk @ _RANK1_C[2].T,
                        v_blk @ _RANK1_C[3].T], axis=-1)
    l = x @ np.swapaxes(y, -1, -2)
    for _ in range(s):
        l = q @ l + l @ q
        q = q @ q
    return q, l


def expm_backward(m: np.ndarray, dl_dq: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient through Q = expm(M).

    Given dL/dQ, returns dL/dM, which equals the Frechet derivative of expm
    at M^T applied to dL/dQ.
    """
    m = np.asarray(m, dtype=np.float64)
    dl_dq = np.asarray(dl_dq, dtype=np.float64)
    _check_square(m)
    if dl_dq.shape != m.shape:
        raise ValueError(f"gradient shape {dl_dq.shape} != matrix shape {m.shape}")
    _, grad = _expm_frechet_coupled(np.swapaxes(m, -1, -2), dl_dq)
    return grad


def softmax_cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against a target class.

    Returns (loss, gradient wrt logits).  Stable under large logits via
    max subtraction.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError("logits must be a vector")
    if not 0 <= target < logits.shape[0]:
        raise ValueError(f"target {target} out of range for {logits.shape[0]} classes")
    z = logits - logits.max()
    exp_z = np.exp(z)
    total = exp_z.sum()
    loss = float(math.log(total) - z[target])
    grad = exp_z / total
    grad[target] -= 1.0
    return loss, grad


def dropout(
    values: np.ndarray, rate: float, rng: np.random.Generator, training: bool = True
) -> np.ndarray:
    """Inverted dropout: zero entries with probability ``rate`` and rescale.

    Identity when rate is 0 or when not training.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    values = np.asarray(values, dtype=np.float64)
    if not training or rate == 0.0:
        return values.copy()
    keep = rng.random(values.shape) >= rate
    return values * keep / (1.0 - rate)


@dataclass(frozen=True)
class AdamState:
    """Optimizer state for one flat parameter vector."""

    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def init(cls, size: int, lr: float = 0.001, beta1: float = 0.9,
             beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(step=0, m=np.zeros(size), v=np.zeros(size),
                   lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """One Adam update with bias correction; returns new params and state."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and optimizer state must have equal length")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, step=t, m=m, v=v)
