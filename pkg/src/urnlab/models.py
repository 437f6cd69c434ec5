"""Generative sequence models: a unitary-evolution RNN and an LSTM baseline.

Both models consume a token at each step, update a recurrent state, and emit
next-token logits through a shared projection layer.  The unitary model turns
each token into a skew-symmetric matrix, exponentiates it into an orthogonal
matrix and multiplies the hidden state by it; the LSTM is the standard gated
cell.  Forward/backward kernels are batched over sequences; the public
single-sequence operations are thin wrappers around them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .numerics import (
    _expm_frechet_rank1,
    expm,
    skew,
    skew_adjoint,
)

START_ID = 0
STOP_ID = 1

CHECKPOINT_FORMAT = "urnlab-checkpoint"
CHECKPOINT_VERSION = 1

_URN_FIELDS = ("embedding", "proj_w", "proj_b")
_LSTM_FIELDS = (
    "embedding",
    "w_f", "w_i", "w_o", "w_c",
    "b_f", "b_i", "b_o", "b_c",
    "proj_w", "proj_b",
)


@dataclass(frozen=True)
class Vocab:
    """Token inventory with reserved START/STOP markers."""

    names: tuple[str, ...]
    start_id: int = START_ID
    stop_id: int = STOP_ID

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate token names")
        if not (0 <= self.start_id < len(self.names)):
            raise ValueError("start_id out of range")
        if not (0 <= self.stop_id < len(self.names)):
            raise ValueError("stop_id out of range")
        if self.start_id == self.stop_id:
            raise ValueError("START and STOP must be distinct")

    @property
    def size(self) -> int:
        return len(self.names)

    def token_id(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class UrnParams:
    """Unitary-evolution model parameters.

    Each vocabulary row of ``embedding`` holds the n(n-1)/2 free entries of a
    skew-symmetric matrix.  ``h0`` is a fixed unit start vector and is not
    trained, so the trainable count is V*n(n-1)/2 + V*n + V.
    """

    n: int
    embedding: np.ndarray  # (V, n(n-1)/2)
    proj_w: np.ndarray     # (V, n)
    proj_b: np.ndarray     # (V,)
    h0: np.ndarray         # (n,), unit norm

    @property
    def vocab_size(self) -> int:
        return self.proj_w.shape[0]


@dataclass(frozen=True)
class LstmParams:
    """LSTM parameters: gate order is forget, input, output, candidate."""

    n: int
    e: int
    embedding: np.ndarray  # (V, e)
    w_f: np.ndarray        # (n, n+e)
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_f: np.ndarray        # (n,)
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    proj_w: np.ndarray     # (V, n)
    proj_b: np.ndarray     # (V,)

    @property
    def vocab_size(self) -> int:
        return self.proj_w.shape[0]


def init_urn(vocab_size: int, units: int, rng: np.random.Generator) -> UrnParams:
    """Initialize a unitary model; token matrices start with 1-norm <= 1."""
    k = units * (units - 1) // 2
    emb = rng.uniform(-1.0, 1.0, size=(vocab_size, k)) / np.sqrt(k)
    norms = np.abs(skew(emb)).sum(axis=-2).max(axis=-1)
    emb *= np.where(norms > 1.0, 1.0 / np.maximum(norms, 1e-300), 1.0)[:, None]
    proj_w = rng.uniform(-1.0, 1.0, size=(vocab_size, units)) / np.sqrt(units)
    h0 = np.zeros(units)
    h0[0] = 1.0
    return UrnParams(n=units, embedding=emb, proj_w=proj_w,
                     proj_b=np.zeros(vocab_size), h0=h0)


def init_lstm(vocab_size: int, units: int, embed_size: int,
              rng: np.random.Generator) -> LstmParams:
    emb = rng.uniform(-1.0, 1.0, size=(vocab_size, embed_size)) / np.sqrt(embed_size)
    r = 1.0 / np.sqrt(units + embed_size)
    w = [rng.uniform(-r, r, size=(units, units + embed_size)) for _ in range(4)]
    proj_w = rng.uniform(-1.0, 1.0, size=(vocab_size, units)) / np.sqrt(units)
    zeros = lambda: np.zeros(units)  # noqa: E731
    return LstmParams(n=units, e=embed_size, embedding=emb,
                      w_f=w[0], w_i=w[1], w_o=w[2], w_c=w[3],
                      b_f=zeros(), b_i=zeros(), b_o=zeros(), b_c=zeros(),
                      proj_w=proj_w, proj_b=np.zeros(vocab_size))


def _fields_of(model) -> tuple[str, ...]:
    if isinstance(model, UrnParams):
        return _URN_FIELDS
    if isinstance(model, LstmParams):
        return _LSTM_FIELDS
    raise TypeError(f"not a model: {type(model).__name__}")


def count_params(model) -> int:
    """Number of trainable scalars."""
    return sum(getattr(model, f).size for f in _fields_of(model))


def params_to_vector(model) -> np.ndarray:
    return np.concatenate([getattr(model, f).ravel() for f in _fields_of(model)])


def params_from_vector(model, vec: np.ndarray):
    """Rebuild a model of the same shape from a flat trainable vector."""
    if vec.shape != (count_params(model),):
        raise ValueError("vector length does not match the model")
    out = {}
    offset = 0
    for f in _fields_of(model):
        ref = getattr(model, f)
        out[f] = vec[offset:offset + ref.size].reshape(ref.shape).copy()
        offset += ref.size
    return replace(model, **out)


def grads_to_vector(model, grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[f].ravel() for f in _fields_of(model)])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def _check_token_ids(tokens: np.ndarray, vocab_size: int) -> None:
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise ValueError("token id out of vocabulary range")


def _keep_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    return rng.random(shape) >= rate


# ---------------------------------------------------------------------------
# single-step operations
# ---------------------------------------------------------------------------

def urn_step(params: UrnParams, h: np.ndarray, token: int, rate: float = 0.0,
             rng: np.random.Generator | None = None, training: bool = False):
    """One recurrence step: h' = expm(skew(x_token)) h.

    In training mode dropout is applied to the token's skew entries before
    exponentiation.  Returns the new state and a cache for backprop.
    """
    if not 0 <= token < params.vocab_size:
        raise ValueError(f"token id {token} out of range")
    x = params.embedding[token].copy()
    keep = None
    if training and rate > 0.0:
        keep = _keep_mask(rng, x.shape, rate)
        x = x * keep / (1.0 - rate)
    s = skew(x)
    q = expm(s)
    h2 = q @ h
    return h2, {"token": token, "h": h, "s": s, "q": q, "keep": keep, "rate": rate}


def lstm_step(params: LstmParams, h: np.ndarray, c: np.ndarray, token: int,
              rate: float = 0.0, rng: np.random.Generator | None = None,
              training: bool = False):
    """One LSTM cell step on the concatenation of (dropped) state and input."""
    if not 0 <= token < params.vocab_size:
        raise ValueError(f"token id {token} out of range")
    x = params.embedding[token].copy()
    hd, keep_h, keep_x = h, None, None
    if training and rate > 0.0:
        keep_h = _keep_mask(rng, h.shape, rate)
        keep_x = _keep_mask(rng, x.shape, rate)
        hd = h * keep_h / (1.0 - rate)
        x = x * keep_x / (1.0 - rate)
    v = np.concatenate([hd, x])
    f = _sigmoid(params.w_f @ v + params.b_f)
    i = _sigmoid(params.w_i @ v + params.b_i)
    o = _sigmoid(params.w_o @ v + params.b_o)
    ct = np.tanh(params.w_c @ v + params.b_c)
    c2 = f * c + i * ct
    tc = np.tanh(c2)
    h2 = o * tc
    cache = {"token": token, "h": h, "c": c, "v": v, "f": f, "i": i, "o": o,
             "ct": ct, "tc": tc, "keep_h": keep_h, "keep_x": keep_x, "rate": rate}
    return h2, c2, cache


def _lstm_step_backward(params: LstmParams, cache: dict, dh2: np.ndarray,
                        dc2: np.ndarray | None = None):
    """Gradients of one lstm_step; returns (grads, dh, dc)."""
    n = params.n
    f, i, o, ct, tc = (cache[k] for k in ("f", "i", "o", "ct", "tc"))
    dc = (dc2 if dc2 is not None else 0.0) + dh2 * o * (1.0 - tc * tc)
    do = dh2 * tc
    df = dc * cache["c"]
    di = dc * ct
    dct = dc * i
    dc_prev = dc * f
    dzf = df * f * (1.0 - f)
    dzi = di * i * (1.0 - i)
    dzo = do * o * (1.0 - o)
    dzc = dct * (1.0 - ct * ct)
    v = cache["v"]
    grads = {
        "w_f": np.outer(dzf, v), "w_i": np.outer(dzi, v),
        "w_o": np.outer(dzo, v), "w_c": np.outer(dzc, v),
        "b_f": dzf, "b_i": dzi, "b_o": dzo, "b_c": dzc,
        "embedding": np.zeros_like(params.embedding),
        "proj_w": np.zeros_like(params.proj_w),
        "proj_b": np.zeros_like(params.proj_b),
    }
    dv = dzf @ params.w_f + dzi @ params.w_i + dzo @ params.w_o + dzc @ params.w_c
    dh_prev, dx = dv[:n], dv[n:]
    scale = 1.0 / (1.0 - cache["rate"]) if cache["keep_h"] is not None else 1.0
    if cache["keep_h"] is not None:
        dh_prev = dh_prev * cache["keep_h"] * scale
        dx = dx * cache["keep_x"] * scale
    grads["embedding"][cache["token"]] = dx
    return grads, dh_prev, dc_prev


# ---------------------------------------------------------------------------
# batched sequence kernels
# ---------------------------------------------------------------------------

@dataclass
class UrnTrace:
    tokens: np.ndarray          # (B, T) consumed inputs
    hs: np.ndarray              # (B, T+1, n)
    keep: np.ndarray | None     # (B, T, k) dropout keep masks
    rate: float

    def __len__(self) -> int:
        return self.tokens.shape[1]


@dataclass
class LstmTrace:
    tokens: np.ndarray
    hs: np.ndarray              # (B, T+1, n)
    cs: np.ndarray              # (B, T+1, n)
    vs: np.ndarray              # (B, T, n+e)
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    ct: np.ndarray
    tc: np.ndarray
    keep_h: np.ndarray | None
    keep_x: np.ndarray | None
    rate: float

    def __len__(self) -> int:
        return self.tokens.shape[1]


def _project(params, hs: np.ndarray) -> np.ndarray:
    return hs @ params.proj_w.T + params.proj_b


def _urn_q_table(params: UrnParams) -> np.ndarray:
    """Per-token orthogonal matrices (eval mode: no dropout)."""
    return expm(skew(params.embedding))


def _urn_forward_batch(params: UrnParams, tokens: np.ndarray, rate: float,
                       rng: np.random.Generator | None, training: bool):
    b, t = tokens.shape
    _check_token_ids(tokens, params.vocab_size)
    n = params.n
    hs = np.empty((b, t + 1, n))
    hs[:, 0] = params.h0
    use_dropout = training and rate > 0.0
    keep = None
    if use_dropout:
        keep = _keep_mask(rng, (b, t, params.embedding.shape[1]), rate)
        xs = params.embedding[tokens] * keep / (1.0 - rate)
        for step in range(t):
            q = expm(skew(xs[:, step]))
            hs[:, step + 1] = np.einsum("bij,bj->bi", q, hs[:, step])
    else:
        qtab = _urn_q_table(params)
        for step in range(t):
            hs[:, step + 1] = np.einsum(
                "bij,bj->bi", qtab[tokens[:, step]], hs[:, step])
    logits = _project(params, hs[:, 1:])
    return logits, UrnTrace(tokens=tokens, hs=hs, keep=keep, rate=rate)


def _urn_backward_batch(params: UrnParams, trace: UrnTrace, dlogits: np.ndarray):
    b, t = trace.tokens.shape
    if dlogits.shape != (b, t, params.vocab_size):
        raise ValueError("dlogits shape does not match the trace")
    v = params.vocab_size
    flat_d = dlogits.reshape(b * t, v)
    grads = {
        "proj_w": flat_d.T @ trace.hs[:, 1:].reshape(b * t, params.n),
        "proj_b": flat_d.sum(axis=0),
        "embedding": np.zeros_like(params.embedding),
    }
    dh_steps = dlogits @ params.proj_w       # (B, T, n)
    scale = 1.0 / (1.0 - trace.rate) if trace.keep is not None else 1.0
    token_ids = np.arange(v)
    dh = np.zeros((b, params.n))
    for step in reversed(range(t)):
        dh = dh + dh_steps[:, step]
        x = params.embedding[trace.tokens[:, step]]
        if trace.keep is not None:
            x = x * trace.keep[:, step] * scale
        # dQ is the rank-1 outer product of dh with the incoming state, which
        # the specialized adjoint exploits; it also hands back Q^T for the
        # state gradient.
        s_t = np.swapaxes(skew(x), -1, -2)
        q_t, ds = _expm_frechet_rank1(s_t, dh, trace.hs[:, step])
        dh = np.einsum("bij,bj->bi", q_t, dh)
        dx = skew_adjoint(ds)
        if trace.keep is not None:
            dx = dx * trace.keep[:, step] * scale
        onehot = (trace.tokens[:, step, None] == token_ids).astype(np.float64)
        grads["embedding"] += onehot.T @ dx
    return grads


def _lstm_forward_batch(params: LstmParams, tokens: np.ndarray, rate: float,
                        rng: np.random.Generator | None, training: bool):
    b, t = tokens.shape
    _check_token_ids(tokens, params.vocab_size)
    n, e = params.n, params.e
    w_all = np.concatenate([params.w_f, params.w_i, params.w_o, params.w_c])
    b_all = np.concatenate([params.b_f, params.b_i, params.b_o, params.b_c])
    xs = params.embedding[tokens]            # (B, T, e)
    use_dropout = training and rate > 0.0
    keep_h = keep_x = None
    scale = 1.0 / (1.0 - rate)
    if use_dropout:
        keep_h = _keep_mask(rng, (b, t, n), rate)
        keep_x = _keep_mask(rng, (b, t, e), rate)
    hs = np.zeros((b, t + 1, n))
    cs = np.zeros((b, t + 1, n))
    vs = np.empty((b, t, n + e))
    f = np.empty((b, t, n))
    i = np.empty((b, t, n))
    o = np.empty((b, t, n))
    ct = np.empty((b, t, n))
    tc = np.empty((b, t, n))
    for step in range(t):
        hd = hs[:, step]
        xd = xs[:, step]
        if use_dropout:
            hd = hd * keep_h[:, step] * scale
            xd = xd * keep_x[:, step] * scale
        v = np.concatenate([hd, xd], axis=1)
        z = v @ w_all.T + b_all
        f[:, step] = _sigmoid(z[:, :n])
        i[:, step] = _sigmoid(z[:, n:2 * n])
        o[:, step] = _sigmoid(z[:, 2 * n:3 * n])
        ct[:, step] = np.tanh(z[:, 3 * n:])
        cs[:, step + 1] = f[:, step] * cs[:, step] + i[:, step] * ct[:, step]
        tc[:, step] = np.tanh(cs[:, step + 1])
        hs[:, step + 1] = o[:, step] * tc[:, step]
        vs[:, step] = v
    logits = _project(params, hs[:, 1:])
    trace = LstmTrace(tokens=tokens, hs=hs, cs=cs, vs=vs, f=f, i=i, o=o,
                      ct=ct, tc=tc, keep_h=keep_h, keep_x=keep_x, rate=rate)
    return logits, trace


def _lstm_backward_batch(params: LstmParams, trace: LstmTrace, dlogits: np.ndarray):
    b, t = trace.tokens.shape
    if dlogits.shape != (b, t, params.vocab_size):
        raise ValueError("dlogits shape does not match the trace")
    n, e, v = params.n, params.e, params.vocab_size
    w_all = np.concatenate([params.w_f, params.w_i, params.w_o, params.w_c])
    flat_d = dlogits.reshape(b * t, v)
    dw_all = np.zeros_like(w_all)
    db_all = np.zeros(4 * n)
    demb = np.zeros_like(params.embedding)
    grads = {
        "proj_w": flat_d.T @ trace.hs[:, 1:].reshape(b * t, n),
        "proj_b": flat_d.sum(axis=0),
    }
    dh_steps = dlogits @ params.proj_w
    scale = 1.0 / (1.0 - trace.rate) if trace.keep_h is not None else 1.0
    token_ids = np.arange(v)
    dh = np.zeros((b, n))
    dc = np.zeros((b, n))
    for step in reversed(range(t)):
        dh = dh + dh_steps[:, step]
        f, i, o, ct, tc = (getattr(trace, k)[:, step] for k in ("f", "i", "o", "ct", "tc"))
        dc = dc + dh * o * (1.0 - tc * tc)
        do = dh * tc
        df = dc * trace.cs[:, step]
        di = dc * ct
        dct = dc * i
        dc = dc * f
        dz = np.concatenate([df * f * (1.0 - f), di * i * (1.0 - i),
                             do * o * (1.0 - o), dct * (1.0 - ct * ct)], axis=1)
        dw_all += dz.T @ trace.vs[:, step]
        db_all += dz.sum(axis=0)
        dv = dz @ w_all
        dh = dv[:, :n]
        dx = dv[:, n:]
        if trace.keep_h is not None:
            dh = dh * trace.keep_h[:, step] * scale
            dx = dx * trace.keep_x[:, step] * scale
        onehot = (trace.tokens[:, step, None] == token_ids).astype(np.float64)
        demb += onehot.T @ dx
    grads["embedding"] = demb
    grads["w_f"], grads["w_i"], grads["w_o"], grads["w_c"] = (
        dw_all[:n], dw_all[n:2 * n], dw_all[2 * n:3 * n], dw_all[3 * n:])
    grads["b_f"], grads["b_i"], grads["b_o"], grads["b_c"] = (
        db_all[:n], db_all[n:2 * n], db_all[2 * n:3 * n], db_all[3 * n:])
    return grads


def forward_batch(model, tokens: np.ndarray, rate: float = 0.0,
                  rng: np.random.Generator | None = None, training: bool = False):
    """Run a (B, T) token batch; returns logits (B, T, V) and a trace."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[1] == 0:
        raise ValueError("expected a non-empty (batch, time) token array")
    if isinstance(model, UrnParams):
        return _urn_forward_batch(model, tokens, rate, rng, training)
    if isinstance(model, LstmParams):
        return _lstm_forward_batch(model, tokens, rate, rng, training)
    raise TypeError(f"not a model: {type(model).__name__}")


def backward_batch(model, trace, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if isinstance(model, UrnParams):
        if not isinstance(trace, UrnTrace):
            raise ValueError("trace does not belong to this model")
        return _urn_backward_batch(model, trace, dlogits)
    if isinstance(model, LstmParams):
        if not isinstance(trace, LstmTrace):
            raise ValueError("trace does not belong to this model")
        return _lstm_backward_batch(model, trace, dlogits)
    raise TypeError(f"not a model: {type(model).__name__}")


# ---------------------------------------------------------------------------
# public sequence operations
# ---------------------------------------------------------------------------

def forward_sequence(model, tokens, rate: float = 0.0,
                     rng: np.random.Generator | None = None,
                     training: bool = False):
    """Consume one token sequence; row t of the logits predicts tokens[t+1].

    The sequence must begin with START.  The unitary model starts from its
    fixed unit vector, the LSTM from zero state.  Emits one logit row per
    input token.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise ValueError("expected a non-empty token sequence")
    if tokens[0] != START_ID:
        raise ValueError("sequence must begin with START")
    logits, trace = forward_batch(model, tokens[None, :], rate, rng, training)
    return logits[0], trace


def backward_sequence(model, trace, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every trainable parameter."""
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.ndim == 2:
        dlogits = dlogits[None, :, :]
    return backward_batch(model, trace, dlogits)


def masked_cross_entropy(logits: np.ndarray, targets: np.ndarray,
                         valid: np.ndarray):
    """Summed cross-entropy over valid positions of a batch.

    logits: (B, T, V); targets, valid: (B, T).  Returns per-sequence losses
    (B,) and dlogits, already zeroed at invalid positions.
    """
    b, t = targets.shape
    z = logits - logits.max(axis=-1, keepdims=True)
    # divergence shows up as non-finite logits; let it surface as inf loss
    with np.errstate(over="ignore", invalid="ignore"):
        exp_z = np.exp(z)
    total = exp_z.sum(axis=-1)
    picked = np.take_along_axis(z, targets[..., None], axis=-1)[..., 0]
    losses = (np.log(total) - picked) * valid
    dlogits = exp_z / total[..., None]
    dlogits[np.arange(b)[:, None], np.arange(t)[None, :], targets] -= 1.0
    dlogits *= valid[..., None]
    return losses.sum(axis=-1), dlogits


def sequence_loss(logits: np.ndarray, tokens, stop_id: int = STOP_ID) -> float:
    """Summed next-token cross-entropy through the STOP target, inclusive.

    tokens[1:] are the targets; positions after the first STOP target (e.g.
    padding) are excluded.
    """
    logits = np.asarray(logits, dtype=np.float64)
    tokens = np.asarray(tokens, dtype=np.int64)
    targets = tokens[1:]
    stops = np.flatnonzero(targets == stop_id)
    if stops.size == 0:
        raise ValueError("sequence has no STOP target")
    valid = np.zeros(targets.size)
    valid[:stops[0] + 1] = 1.0
    losses, _ = masked_cross_entropy(
        logits[None, :targets.size], targets[None, :], valid[None, :])
    return float(losses[0])


def sequence_operator(params: UrnParams, tokens) -> np.ndarray:
    """Composed orthogonal matrix of a token sequence (eval mode).

    The empty sequence maps to the identity; concatenation maps to the
    reversed matrix product, so applying the result to the start vector
    reproduces the stepwise recurrence.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    _check_token_ids(tokens, params.vocab_size)
    qtab = _urn_q_table(params)
    out = np.eye(params.n)
    for tok in tokens:
        out = qtab[tok] @ out
    return out


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(path, model, vocab: Vocab, meta: dict | None = None) -> None:
    """Write a versioned text checkpoint; round-trips bit-exactly."""
    arch = "urn" if isinstance(model, UrnParams) else "lstm"
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": arch,
        "units": model.n,
        "embed_size": model.e if arch == "lstm" else None,
        "vocab": {"names": list(vocab.names), "start_id": vocab.start_id,
                  "stop_id": vocab.stop_id},
        "meta": meta or {},
        "params_hex": [x.hex() for x in params_to_vector(model)],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Read a checkpoint; returns (model, vocab, meta)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    vocab = Vocab(names=tuple(payload["vocab"]["names"]),
                  start_id=payload["vocab"]["start_id"],
                  stop_id=payload["vocab"]["stop_id"])
    vec = np.array([float.fromhex(x) for x in payload["params_hex"]])
    rng = np.random.default_rng(0)  # shapes only; values overwritten
    if payload["arch"] == "urn":
        model = init_urn(vocab.size, payload["units"], rng)
    else:
        model = init_lstm(vocab.size, payload["units"], payload["embed_size"], rng)
    return params_from_vector(model, vec), vocab, payload["meta"]
