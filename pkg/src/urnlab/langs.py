"""Synthetic language machinery: samplers, prefix oracles and analyzers.

Two token inventories are defined here.  The cross-serial task uses the
interleaved counting pattern a^m b^n c^m d^n; the generalised Dyck task uses
nested matching bracket pairs of several types.  Token ids are fixed:
START = 0 and STOP = 1 in both tasks, content tokens from 2 upward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import START_ID, STOP_ID, Vocab

CS_A, CS_B, CS_C, CS_D = 2, 3, 4, 5

BRACKET_PAIRS = (("(", ")"), ("[", "]"), ("{", "}"), ("<", ">"), ("`", "'"))


def build_cross_serial_vocab(size: int = 10) -> Vocab:
    """a/b/c/d plus markers, padded with unused tokens up to ``size``."""
    if size < 6:
        raise ValueError("cross-serial vocabulary needs at least 6 tokens")
    names = ["<s>", "</s>", "a", "b", "c", "d"]
    names += [f"u{i}" for i in range(size - 6)]
    return Vocab(names=tuple(names))


def build_dyck_vocab(pair_count: int = 5) -> Vocab:
    names = ["<s>", "</s>"]
    for i in range(pair_count):
        if i < len(BRACKET_PAIRS):
            names.extend(BRACKET_PAIRS[i])
        else:
            names.extend((f"o{i}", f"c{i}"))
    return Vocab(names=tuple(names))


def opener_id(pair: int) -> int:
    return 2 + 2 * pair


def closer_id(pair: int) -> int:
    return 3 + 2 * pair


def is_opener(token: int) -> bool:
    return token >= 2 and (token - 2) % 2 == 0


def is_closer(token: int) -> bool:
    return token >= 2 and (token - 2) % 2 == 1


def bracket_ids(text: str, pair_count: int = 5) -> list[int]:
    """Token ids for a literal bracket string such as ``"{()}"``."""
    vocab = build_dyck_vocab(pair_count)
    return [vocab.token_id(ch) for ch in text]


@dataclass(frozen=True)
class CrossSerialSpec:
    """The language {a^m b^n c^m d^n : m + n < k}."""

    k: int
    include_empty: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.include_empty and self.k < 2:
            raise ValueError("k=1 admits only the empty string")

    def pairs(self) -> list[tuple[int, int]]:
        out = [(m, n) for total in range(self.k)
               for m in range(total + 1) for n in [total - m]]
        if not self.include_empty:
            out.remove((0, 0))
        return out


@dataclass(frozen=True)
class DyckSpec:
    """Balanced bracket strings with ``n_pairs`` matching pairs."""

    pair_count: int = 5
    n_pairs: int = 10

    def __post_init__(self):
        if self.pair_count < 1 or self.n_pairs < 1:
            raise ValueError("pair_count and n_pairs must be positive")


@dataclass(frozen=True)
class LabeledString:
    """A sampled sequence with its structural annotations.

    ``closers`` holds (position, attractor count) for every closing bracket,
    positions counted within ``tokens`` (so position 0 is START).
    """

    tokens: np.ndarray
    m: int | None = None
    n: int | None = None
    depth: int | None = None
    closers: tuple[tuple[int, int], ...] = field(default=())

    def __len__(self) -> int:
        return len(self.tokens)


# ---------------------------------------------------------------------------
# cross-serial language
# ---------------------------------------------------------------------------

def _cs_tokens(m: int, n: int) -> np.ndarray:
    return np.array([START_ID] + [CS_A] * m + [CS_B] * n
                    + [CS_C] * m + [CS_D] * n + [STOP_ID], dtype=np.int64)


def cs_sample(spec: CrossSerialSpec, rng: np.random.Generator) -> LabeledString:
    """Uniform draw over the (m, n) pairs of the language."""
    pairs = spec.pairs()
    m, n = pairs[rng.integers(len(pairs))]
    return LabeledString(tokens=_cs_tokens(m, n), m=m, n=n)


class _CsState:
    """Incremental prefix acceptor over the counts (a, b, c, d)."""

    __slots__ = ("a", "b", "c", "d", "done")

    def __init__(self):
        self.a = self.b = self.c = self.d = 0
        self.done = False

    def valid_next(self, k: int) -> set[int]:
        if self.done:
            return set()
        out = set()
        if self.b == self.c == self.d == 0 and self.a + 1 < k:
            out.add(CS_A)
        if self.c == self.d == 0 and self.a + self.b + 1 < k:
            out.add(CS_B)
        if self.d == 0 and self.c < self.a:
            out.add(CS_C)
        if self.c == self.a and self.d < self.b:
            out.add(CS_D)
        if self.c == self.a and self.d == self.b:
            out.add(STOP_ID)
        return out

    def advance(self, token: int, k: int) -> None:
        if token not in self.valid_next(k):
            raise ValueError(f"token {token} is not a valid continuation")
        if token == STOP_ID:
            self.done = True
        elif token == CS_A:
            self.a += 1
        elif token == CS_B:
            self.b += 1
        elif token == CS_C:
            self.c += 1
        else:
            self.d += 1


def cs_valid_next(prefix, k: int) -> set[int]:
    """Tokens that extend ``prefix`` to a prefix of some member of the language.

    ``prefix`` must itself be a valid prefix starting with START; anything
    else raises ValueError.
    """
    prefix = [int(t) for t in prefix]
    if not prefix or prefix[0] != START_ID:
        raise ValueError("prefix must start with START")
    state = _CsState()
    for tok in prefix[1:]:
        state.advance(tok, k)
    return state.valid_next(k)


def cs_string_correct(predictions, gold: LabeledString, k: int) -> bool:
    """Whether every greedy prediction is a possible continuation of the gold
    prefix, through the STOP prediction inclusive."""
    tokens = gold.tokens
    if len(predictions) != len(tokens) - 1:
        raise ValueError("need exactly one prediction per gold target")
    state = _CsState()
    for pos, pred in enumerate(predictions):
        if int(pred) not in state.valid_next(k):
            return False
        state.advance(int(tokens[pos + 1]), k)
    return True


# ---------------------------------------------------------------------------
# generalised Dyck language
# ---------------------------------------------------------------------------

def dyck_sample(spec: DyckSpec, rng: np.random.Generator) -> LabeledString:
    """Grid random walk between opposite corners, never crossing the diagonal.

    An x-step opens a bracket (type uniform), a y-step closes the innermost
    open one.  Unconstrained steps go either way with probability 1/2.
    """
    n_pairs = spec.n_pairs
    coins = rng.random(2 * n_pairs)
    types = rng.integers(0, spec.pair_count, size=n_pairs)
    tokens = [START_ID]
    open_types: list[int] = []          # types in opening order
    stack: list[int] = []               # indices into open_types
    closers = []
    opened = closed = depth = 0
    for step in range(2 * n_pairs):
        if closed == opened:
            do_open = True
        elif opened == n_pairs:
            do_open = False
        else:
            do_open = coins[step] < 0.5
        if do_open:
            t = int(types[opened])
            stack.append(len(open_types))
            open_types.append(t)
            tokens.append(opener_id(t))
            opened += 1
            depth = max(depth, len(stack))
        else:
            idx = stack.pop()
            t = open_types[idx]
            attractors = sum(1 for other in open_types[idx + 1:] if other != t)
            tokens.append(closer_id(t))
            closers.append((len(tokens) - 1, attractors))
            closed += 1
    tokens.append(STOP_ID)
    return LabeledString(tokens=np.array(tokens, dtype=np.int64),
                         depth=depth, closers=tuple(closers))


def _matched_positions(tokens) -> dict[int, int]:
    """Map each closing position to its matching opening position.

    Validates balance, including closer type against the stack top.
    """
    tokens = [int(t) for t in tokens]
    stack: list[int] = []
    matches: dict[int, int] = {}
    for pos, tok in enumerate(tokens):
        if tok in (START_ID, STOP_ID):
            continue
        if is_opener(tok):
            stack.append(pos)
        elif is_closer(tok):
            if not stack or (tokens[stack[-1]] - 2) // 2 != (tok - 3) // 2:
                raise ValueError(f"unbalanced closer at position {pos}")
            matches[pos] = stack.pop()
        else:
            raise ValueError(f"token {tok} is not a bracket")
    if stack:
        raise ValueError("unclosed brackets remain")
    return matches


def dyck_depth(s) -> int:
    """Maximum nesting level of a balanced string."""
    tokens = s.tokens if isinstance(s, LabeledString) else s
    _matched_positions(tokens)  # balance check
    depth = level = 0
    for tok in (int(t) for t in tokens):
        if is_opener(tok):
            level += 1
            depth = max(depth, level)
        elif is_closer(tok):
            level -= 1
    return depth


def dyck_attractors(s, close_index: int) -> int:
    """Openers of the wrong kind strictly inside the pair closed at
    ``close_index``."""
    tokens = s.tokens if isinstance(s, LabeledString) else s
    tokens = [int(t) for t in tokens]
    if not (0 <= close_index < len(tokens)) or not is_closer(tokens[close_index]):
        raise ValueError(f"position {close_index} is not a closing bracket")
    open_pos = _matched_positions(tokens)[close_index]
    pair = (tokens[close_index] - 3) // 2
    return sum(1 for p in range(open_pos + 1, close_index)
               if is_opener(tokens[p]) and (tokens[p] - 2) // 2 != pair)


def dyck_closer_oracle(prefix) -> int:
    """The unique correct closing token for a prefix: the stack top."""
    stack: list[int] = []
    for tok in (int(t) for t in prefix):
        if tok in (START_ID, STOP_ID):
            continue
        if is_opener(tok):
            stack.append((tok - 2) // 2)
        elif is_closer(tok):
            if not stack or stack[-1] != (tok - 3) // 2:
                raise ValueError("prefix is not a valid bracket prefix")
            stack.pop()
        else:
            raise ValueError(f"token {tok} is not a bracket")
    if not stack:
        raise ValueError("no open bracket to close")
    return closer_id(stack[-1])


def label_cross_serial(tokens) -> LabeledString:
    """Rebuild (m, n) annotations, validating the a^m b^n c^m d^n shape."""
    tokens = np.asarray(tokens, dtype=np.int64)
    body = tokens[1:-1]
    if tokens[0] != START_ID or tokens[-1] != STOP_ID:
        raise ValueError("expected START ... STOP")
    counts = [int((body == t).sum()) for t in (CS_A, CS_B, CS_C, CS_D)]
    m, n = counts[0], counts[1]
    if counts[2] != m or counts[3] != n:
        raise ValueError("not of the form a^m b^n c^m d^n")
    if not np.array_equal(body, _cs_tokens(m, n)[1:-1]):
        raise ValueError("tokens out of phase order")
    return LabeledString(tokens=tokens, m=m, n=n)


def label_dyck(tokens) -> LabeledString:
    """Rebuild depth and attractor annotations for a balanced string."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens[0] != START_ID or tokens[-1] != STOP_ID:
        raise ValueError("expected START ... STOP")
    _matched_positions(tokens)  # balance check
    open_types: list[int] = []
    stack: list[int] = []
    closers = []
    depth = 0
    for pos, tok in enumerate(int(t) for t in tokens):
        if is_opener(tok):
            stack.append(len(open_types))
            open_types.append((tok - 2) // 2)
            depth = max(depth, len(stack))
        elif is_closer(tok):
            idx = stack.pop()
            t = open_types[idx]
            attractors = sum(1 for other in open_types[idx + 1:] if other != t)
            closers.append((pos, attractors))
    return LabeledString(tokens=tokens, depth=depth, closers=tuple(closers))


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------

DATASET_MAGIC = "# urnlab-dataset v1"


def write_dataset(path, strings: list[LabeledString], vocab: Vocab,
                  meta: dict) -> None:
    """One sequence of token names per line, after one metadata line."""
    items = " ".join(f"{k}={v}" for k, v in meta.items())
    lines = [f"{DATASET_MAGIC} {items}".rstrip()]
    for s in strings:
        lines.append(" ".join(vocab.names[t] for t in s.tokens))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path, vocab: Vocab) -> tuple[list[LabeledString], dict]:
    """Parse a dataset file and recompute annotations from the tokens."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith(DATASET_MAGIC):
        raise ValueError(f"{path}: not a dataset file")
    meta = dict(item.split("=", 1)
                for item in text[0][len(DATASET_MAGIC):].split() if "=" in item)
    label = label_dyck if meta.get("task") == "dyck" else label_cross_serial
    ids = {name: i for i, name in enumerate(vocab.names)}
    strings = []
    for line in text[1:]:
        if not line.strip():
            continue
        strings.append(label([ids[name] for name in line.split()]))
    return strings, meta
