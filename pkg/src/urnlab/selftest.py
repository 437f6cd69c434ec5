"""Fast in-process property suites behind the ``selftest`` subcommand."""

from __future__ import annotations

import numpy as np

from . import harness, langs, models, numerics


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise AssertionError(message)


def _suite_unitarity() -> None:
    rng = np.random.default_rng(101)
    for n in (2, 8, 32):
        k = n * (n - 1) // 2
        mats = numerics.skew(rng.uniform(-5.0, 5.0, size=(50, k)))
        qs = numerics.expm(mats)
        defect = np.abs(np.swapaxes(qs, -1, -2) @ qs - np.eye(n)).max()
        _check(defect < 1e-9, f"orthogonality defect {defect:.2e} at n={n}")
        h = rng.standard_normal((50, n))
        s = rng.standard_normal((50, n))
        h /= np.linalg.norm(h, axis=1, keepdims=True)
        s /= np.linalg.norm(s, axis=1, keepdims=True)
        before = (h * s).sum(axis=1)
        after = (np.einsum("bij,bj->bi", qs, h) * np.einsum("bij,bj->bi", qs, s)).sum(axis=1)
        _check(np.abs(after - before).max() < 1e-9, f"inner products drift at n={n}")


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-300))


def _suite_expm_gradients() -> None:
    rng = np.random.default_rng(102)
    n, h = 4, 1e-5
    m = numerics.skew(rng.uniform(-1.0, 1.0, size=n * (n - 1) // 2))
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            _, l = numerics.expm_frechet(m, e)
            fd = (numerics.expm(m + h * e) - numerics.expm(m - h * e)) / (2 * h)
            _check(_rel_err(l, fd) < 1e-4, f"Frechet mismatch at direction {(i, j)}")
    a = rng.standard_normal((n, n))
    grad = numerics.expm_backward(m, a.T)
    fd = np.zeros_like(m)
    for i in range(n):
        for j in range(n):
            mp, mm = m.copy(), m.copy()
            mp[i, j] += h
            mm[i, j] -= h
            fd[i, j] = (np.trace(a @ numerics.expm(mp))
                        - np.trace(a @ numerics.expm(mm))) / (2 * h)
    _check(_rel_err(grad, fd) < 1e-4, "expm backward mismatch")


def _bptt_check(model, tokens: np.ndarray) -> None:
    def loss_of(vec):
        m = models.params_from_vector(model, vec)
        logits, _ = models.forward_sequence(m, tokens)
        return models.sequence_loss(logits, tokens)

    logits, trace = models.forward_sequence(model, tokens, training=True)
    targets = tokens[1:]
    stop = int(np.flatnonzero(targets == models.STOP_ID)[0])
    valid = np.zeros(targets.size)
    valid[:stop + 1] = 1.0
    _, dl = models.masked_cross_entropy(logits[None, :targets.size],
                                        targets[None, :], valid[None, :])
    dl_full = np.zeros((1, tokens.size, model.vocab_size))
    dl_full[:, :targets.size] = dl
    analytic = models.grads_to_vector(
        model, models.backward_sequence(model, trace, dl_full))
    vec = models.params_to_vector(model)
    fd = np.zeros_like(vec)
    for idx in range(vec.size):
        vp, vm = vec.copy(), vec.copy()
        vp[idx] += 1e-5
        vm[idx] -= 1e-5
        fd[idx] = (loss_of(vp) - loss_of(vm)) / 2e-5
    _check(_rel_err(analytic, fd) < 1e-4,
           f"BPTT gradient mismatch for {type(model).__name__}")


def _suite_bptt_gradients() -> None:
    rng = np.random.default_rng(103)
    tokens = np.array([0, 2, 3, 2, 3, 1])
    _bptt_check(models.init_urn(4, 4, rng), tokens)
    _bptt_check(models.init_lstm(4, 4, 3, rng), tokens)


def _suite_cross_serial_oracle() -> None:
    for k in (1, 2, 3, 4):
        table: dict[tuple, set] = {}
        for m in range(k):
            for n in range(k - m):
                member = tuple([0] + [langs.CS_A] * m + [langs.CS_B] * n
                               + [langs.CS_C] * m + [langs.CS_D] * n + [1])
                for i in range(1, len(member) + 1):
                    table.setdefault(member[:i], set())
                    if i < len(member):
                        table[member[:i]].add(member[i])
        for prefix, expected in table.items():
            got = langs.cs_valid_next(list(prefix), k)
            _check(got == expected, f"oracle mismatch at {prefix} (k={k})")


def _suite_dyck_sampler() -> None:
    rng = np.random.default_rng(104)
    spec = langs.DyckSpec(pair_count=5, n_pairs=10)
    for _ in range(2000):
        s = langs.dyck_sample(spec, rng)
        _check(len(s.tokens) == 22, "wrong string length")
        _check(1 <= s.depth <= 10, "depth out of range")
        relabeled = langs.label_dyck(s.tokens)
        _check(relabeled.closers == s.closers and relabeled.depth == s.depth,
               "annotations disagree with analyzer")
        for pos, _ in s.closers:
            _check(langs.dyck_closer_oracle(s.tokens[:pos]) == int(s.tokens[pos]),
                   "closer oracle disagrees with generator")


def _suite_determinism() -> None:
    config = harness.ExperimentConfig(
        task="cross-serial", arch="urn", units=4, vocab_size=10, lr=0.01,
        batch_size=32, epochs=2, dropout=0.05, seed=7, train_count=96,
        test_count=48, k_train=4, k_test=5)
    a = harness.run_experiment(config)
    b = harness.run_experiment(config)
    _check([r.__dict__ for r in a.records] == [r.__dict__ for r in b.records],
           "identical seeds produced different records")
    _check(np.array_equal(models.params_to_vector(a.model),
                          models.params_to_vector(b.model)),
           "identical seeds produced different parameters")


SUITES = (
    ("unitarity", _suite_unitarity),
    ("matrix-exp-gradients", _suite_expm_gradients),
    ("bptt-gradients", _suite_bptt_gradients),
    ("cross-serial-oracle", _suite_cross_serial_oracle),
    ("dyck-sampler", _suite_dyck_sampler),
    ("determinism", _suite_determinism),
)


def run_all() -> int:
    failures = 0
    for name, fn in SUITES:
        try:
            fn()
        except AssertionError as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    return 0 if failures == 0 else 1
