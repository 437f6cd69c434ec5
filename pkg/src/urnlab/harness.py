"""Experiment orchestration: configs, dataset building, training, evaluation.

An experiment is a pure function of its :class:`ExperimentConfig`: datasets,
initialization, batch order and dropout all derive from one seed, so repeated
runs produce identical epoch records.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import langs, models
from .models import START_ID, STOP_ID
from .numerics import AdamState, adam_step

TASKS = ("cross-serial", "dyck")
ARCHS = ("urn", "lstm")


class ConfigError(Exception):
    """A configuration that cannot be run."""


class TrainingFailure(RuntimeError):
    """Numerical divergence during training; carries partial records."""

    def __init__(self, message: str, epoch: int, batch: int, records=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.records = records or []


@dataclass(frozen=True)
class ExperimentConfig:
    """Full declarative description of one training/evaluation run."""

    task: str = "cross-serial"
    arch: str = "urn"
    units: int = 32
    vocab_size: int = 10
    embed_size: int = 20            # LSTM input embedding width
    lr: float = 0.001
    batch_size: int = 512
    epochs: int = 100
    dropout: float = 0.05
    seed: int = 42
    train_count: int = 51200
    test_count: int = 5120
    k_train: int = 8                # cross-serial bound for training strings
    k_test: int = 10
    include_empty: bool = True      # admit the (m, n) = (0, 0) string
    n_pairs: int = 10               # Dyck pairs per string
    pair_count: int = 5             # Dyck bracket types
    depth_train: tuple[int, int] = (3, 6)
    depth_test: tuple[int, int] = (7, 9)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if min(self.units, self.batch_size, self.train_count, self.test_count) < 1:
            raise ConfigError("units, batch_size and dataset sizes must be positive")
        if self.units < 2:
            raise ConfigError("units must be at least 2")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.task == "cross-serial":
            if self.vocab_size < 6:
                raise ConfigError("cross-serial needs at least 6 tokens")
            if min(self.k_train, self.k_test) < 1:
                raise ConfigError("k bounds must be at least 1")
        else:
            if self.vocab_size != 2 + 2 * self.pair_count:
                raise ConfigError("dyck vocab_size must equal 2 + 2*pair_count")
            for lo, hi in (self.depth_train, self.depth_test):
                if not 1 <= lo <= hi <= self.n_pairs:
                    raise ConfigError(f"bad depth range {lo}:{hi}")
        if self.arch == "lstm" and self.embed_size < 1:
            raise ConfigError("embed_size must be positive")

    def to_meta(self) -> dict:
        out = dataclasses.asdict(self)
        out["depth_train"] = f"{self.depth_train[0]}:{self.depth_train[1]}"
        out["depth_test"] = f"{self.depth_test[0]}:{self.depth_test[1]}"
        return out

    @property
    def run_name(self) -> str:
        return f"{self.task}_{self.arch}{self.units}"


def _parse_field(name: str, text: str):
    kinds = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown config field {name!r}")
    kind = kinds[name]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind.startswith("tuple"):
            lo, hi = text.split(":")
            return (int(lo), int(hi))
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse the flat ``key = value`` config format."""
    cfg = base or ExperimentConfig()
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        overrides[key] = _parse_field(key, value)
    return replace(cfg, **overrides)


def load_config_file(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load_preset(name: str) -> ExperimentConfig:
    """Load one of the shipped presets by name."""
    ref = resources.files("urnlab").joinpath(f"presets/{name}.cfg")
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return parse_config_text(ref.read_text(encoding="utf-8"))


def task_vocab(config: ExperimentConfig) -> models.Vocab:
    if config.task == "cross-serial":
        return langs.build_cross_serial_vocab(config.vocab_size)
    return langs.build_dyck_vocab(config.pair_count)


def expected_param_count(config: ExperimentConfig) -> int:
    """Closed-form trainable size, used as a start-up shape check."""
    n, v, e = config.units, config.vocab_size, config.embed_size
    if config.arch == "urn":
        return v * (n * (n - 1) // 2) + v * n + v
    return v * e + 4 * (n * (n + e) + n) + v * n + v


def make_model(config: ExperimentConfig, rng: np.random.Generator):
    if config.arch == "urn":
        return models.init_urn(config.vocab_size, config.units, rng)
    return models.init_lstm(config.vocab_size, config.units, config.embed_size, rng)


def _rng_streams(seed: int) -> list[np.random.Generator]:
    # fixed spawn order: train data, test data, init, training loop
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def _sample_depth_filtered(spec: langs.DyckSpec, rng, count: int,
                           depth_range: tuple[int, int]) -> list[langs.LabeledString]:
    lo, hi = depth_range
    out: list[langs.LabeledString] = []
    attempts = 0
    limit = 1000 * count + 10_000
    while len(out) < count:
        if attempts >= limit:
            raise ConfigError(
                f"depth range {lo}:{hi} too rare: {len(out)}/{count} strings "
                f"after {attempts} draws")
        s = langs.dyck_sample(spec, rng)
        attempts += 1
        if lo <= s.depth <= hi:
            out.append(s)
    return out


def build_datasets(config: ExperimentConfig):
    """Sample the train and test sets; deterministic given config.seed."""
    config.validate()
    rng_train, rng_test, _, _ = _rng_streams(config.seed)
    if config.task == "cross-serial":
        train_spec = langs.CrossSerialSpec(config.k_train, config.include_empty)
        test_spec = langs.CrossSerialSpec(config.k_test, config.include_empty)
        train = [langs.cs_sample(train_spec, rng_train) for _ in range(config.train_count)]
        test = [langs.cs_sample(test_spec, rng_test) for _ in range(config.test_count)]
    else:
        spec = langs.DyckSpec(config.pair_count, config.n_pairs)
        train = _sample_depth_filtered(spec, rng_train, config.train_count,
                                       config.depth_train)
        test = _sample_depth_filtered(spec, rng_test, config.test_count,
                                      config.depth_test)
    return train, test


# ---------------------------------------------------------------------------
# encoded datasets
# ---------------------------------------------------------------------------

@dataclass
class EncodedDataset:
    """Padded token arrays plus per-task evaluation structures."""

    strings: list[langs.LabeledString]
    tokens: np.ndarray               # (count, max_len), STOP-padded
    lengths: np.ndarray              # (count,)
    valid_masks: np.ndarray | None = None   # (count, max_len-1) uint32 bitmasks
    nm: np.ndarray | None = None             # (count,) m+n
    closer_pos: np.ndarray | None = None     # (count, n_pairs)
    closer_target: np.ndarray | None = None  # (count, n_pairs)
    attractors: np.ndarray | None = None     # (count, n_pairs)

    def __len__(self) -> int:
        return len(self.strings)


def encode_dataset(strings: list[langs.LabeledString], task: str,
                   k: int | None = None) -> EncodedDataset:
    count = len(strings)
    lengths = np.array([len(s) for s in strings], dtype=np.int64)
    max_len = int(lengths.max())
    tokens = np.full((count, max_len), STOP_ID, dtype=np.int64)
    for i, s in enumerate(strings):
        tokens[i, :len(s)] = s.tokens
    data = EncodedDataset(strings=strings, tokens=tokens, lengths=lengths)
    if task == "cross-serial":
        masks = np.zeros((count, max_len - 1), dtype=np.uint32)
        for i, s in enumerate(strings):
            state = langs._CsState()
            for t in range(len(s) - 1):
                bits = 0
                for tok in state.valid_next(k):
                    bits |= 1 << tok
                masks[i, t] = bits
                state.advance(int(s.tokens[t + 1]), k)
        data.valid_masks = masks
        data.nm = np.array([s.m + s.n for s in strings], dtype=np.int64)
    else:
        n_pairs = len(strings[0].closers)
        data.closer_pos = np.array([[pos for pos, _ in s.closers] for s in strings])
        data.closer_target = np.array([[int(s.tokens[pos]) for pos, _ in s.closers]
                                       for s in strings])
        data.attractors = np.array([[attr for _, attr in s.closers] for s in strings])
        assert data.closer_pos.shape == (count, n_pairs)
    return data


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    """Per-epoch metric row."""

    epoch: int
    trainloss: float
    testloss: float
    accuracy: float
    max_err_rate: float
    by_attractors: dict[int, tuple[int, int]] | None = None  # bin -> (total, errors)
    by_length: dict[int, tuple[int, int]] | None = None      # m+n -> (total, errors)


def _batch_valid(lengths: np.ndarray, steps: int) -> np.ndarray:
    return (np.arange(steps)[None, :] < (lengths - 1)[:, None]).astype(np.float64)


def train_epoch(model, data: EncodedDataset, config: ExperimentConfig,
                opt: AdamState, rng: np.random.Generator, epoch: int = 0):
    """One pass: seeded shuffle, summed gradients per batch, one Adam step each.

    Returns (model, optimizer state, mean per-sequence loss).
    """
    order = rng.permutation(len(data))
    total_loss = 0.0
    for batch_index, lo in enumerate(range(0, len(order), config.batch_size)):
        idx = order[lo:lo + config.batch_size]
        max_len = int(data.lengths[idx].max())
        toks = data.tokens[idx, :max_len]
        logits, trace = models.forward_batch(
            model, toks[:, :-1], config.dropout, rng, training=True)
        valid = _batch_valid(data.lengths[idx], max_len - 1)
        losses, dlogits = models.masked_cross_entropy(logits, toks[:, 1:], valid)
        batch_loss = float(losses.sum())
        if not np.isfinite(batch_loss):
            raise TrainingFailure(
                f"non-finite loss in epoch {epoch}, batch {batch_index}",
                epoch=epoch, batch=batch_index)
        total_loss += batch_loss
        grads = models.backward_batch(model, trace, dlogits)
        vec, opt = adam_step(models.params_to_vector(model),
                             models.grads_to_vector(model, grads), opt)
        model = models.params_from_vector(model, vec)
    return model, opt, total_loss / len(data)


def collect_logits(model, data: EncodedDataset, chunk: int = 2048):
    """Eval-mode logits for a whole dataset plus its mean sequence loss."""
    steps = data.tokens.shape[1] - 1
    logits = np.empty((len(data), steps, model.vocab_size))
    loss_total = 0.0
    for lo in range(0, len(data), chunk):
        idx = np.arange(lo, min(lo + chunk, len(data)))
        part, _ = models.forward_batch(model, data.tokens[idx, :-1])
        valid = _batch_valid(data.lengths[idx], steps)
        losses, _ = models.masked_cross_entropy(part, data.tokens[idx, 1:], valid)
        loss_total += float(losses.sum())
        logits[idx] = part
    return loss_total / len(data), logits


def score_cross_serial_strings(data: EncodedDataset,
                               preds: np.ndarray) -> np.ndarray:
    """Which strings contain an invalid greedy prediction.

    ``preds`` holds argmax token ids, one per target position; a prediction
    counts as correct when the oracle admits it as a continuation of the gold
    prefix, so a string is an error only if some position predicts outside
    the precomputed valid-token mask.
    """
    valid = _batch_valid(data.lengths, preds.shape[1])
    ok = (data.valid_masks >> preds.astype(np.uint32)) & 1
    return ((ok == 0) & (valid > 0)).any(axis=1)


def score_dyck_closers(data: EncodedDataset, logits: np.ndarray,
                       pair_count: int = 5) -> np.ndarray:
    """Wrong/right matrix over every closing position.

    The prediction at a closing position is the argmax over the closing-token
    logits of the row that forecasts it.
    """
    closer_ids = np.array([langs.closer_id(i) for i in range(pair_count)])
    rows = data.closer_pos - 1          # logit row predicting that position
    closer_logits = logits[np.arange(len(data))[:, None, None],
                           rows[:, :, None], closer_ids[None, None, :]]
    pred = closer_ids[closer_logits.argmax(axis=-1)]
    return pred != data.closer_target


def _binned(keys: np.ndarray, wrong: np.ndarray) -> dict[int, tuple[int, int]]:
    out: dict[int, tuple[int, int]] = {}
    for key in range(int(keys.max()) + 1):
        members = keys == key
        if members.any():
            out[key] = (int(members.sum()), int(wrong[members].sum()))
    return out


@dataclass
class CrossSerialEval:
    testloss: float
    error_rate: float
    by_length: dict[int, tuple[int, int]]  # m+n -> (total, errors)


def evaluate_cross_serial(model, data: EncodedDataset,
                          k_test: int) -> CrossSerialEval:
    """Score greedy predictions; a string is correct only if every position
    predicts some valid continuation of the gold prefix, STOP included."""
    testloss, logits = collect_logits(model, data)
    string_errors = score_cross_serial_strings(data, logits.argmax(axis=-1))
    return CrossSerialEval(testloss=testloss,
                           error_rate=float(string_errors.mean()),
                           by_length=_binned(data.nm, string_errors))


@dataclass
class DyckEval:
    testloss: float
    mean_err: float
    max_err_rate: float
    by_attractors: dict[int, tuple[int, int]]  # bin -> (total, errors)


def evaluate_dyck(model, data: EncodedDataset,
                  pair_count: int = 5) -> DyckEval:
    """Score closer predictions only, argmax restricted to closing tokens,
    binned by attractor count."""
    testloss, logits = collect_logits(model, data)
    wrong = score_dyck_closers(data, logits, pair_count)
    by_attractors = _binned(data.attractors, wrong)
    rates = [errors / total for total, errors in by_attractors.values()]
    return DyckEval(testloss=testloss,
                    mean_err=float(wrong.mean()),
                    max_err_rate=float(max(rates)),
                    by_attractors=by_attractors)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[EpochRecord]
    model: object
    vocab: models.Vocab

    def best_epoch_attractors(self) -> dict[int, tuple[int, int]] | None:
        """Attractor breakdown at the epoch with the lowest peak error."""
        usable = [r for r in self.records if r.by_attractors is not None]
        if not usable:
            return None
        return min(usable, key=lambda r: r.max_err_rate).by_attractors

    def final_by_length(self) -> dict[int, tuple[int, int]] | None:
        if not self.records:
            return None
        return self.records[-1].by_length


def _evaluate(model, config: ExperimentConfig, test_data: EncodedDataset,
              epoch: int, trainloss: float) -> EpochRecord:
    if config.task == "cross-serial":
        ev = evaluate_cross_serial(model, test_data, config.k_test)
        # no attractor structure here; the peak-error column mirrors the
        # full-string error rate
        return EpochRecord(epoch=epoch, trainloss=trainloss, testloss=ev.testloss,
                           accuracy=1.0 - ev.error_rate, max_err_rate=ev.error_rate,
                           by_length=ev.by_length)
    ev = evaluate_dyck(model, test_data, config.pair_count)
    return EpochRecord(epoch=epoch, trainloss=trainloss, testloss=ev.testloss,
                       accuracy=1.0 - ev.mean_err, max_err_rate=ev.max_err_rate,
                       by_attractors=ev.by_attractors)


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Train and evaluate per the config; one EpochRecord per epoch.

    Pure function of the config: identical configs give identical records.
    On numerical divergence the raised TrainingFailure carries the records
    of the completed epochs.
    """
    config.validate()
    say = progress or (lambda _msg: None)
    train_strings, test_strings = build_datasets(config)
    k = config.k_test if config.task == "cross-serial" else None
    train_data = encode_dataset(train_strings, config.task, config.k_train)
    test_data = encode_dataset(test_strings, config.task, k)
    _, _, rng_init, rng_loop = _rng_streams(config.seed)
    model = make_model(config, rng_init)
    vocab = task_vocab(config)
    n_params = models.count_params(model)
    if n_params != expected_param_count(config):
        raise ConfigError(
            f"parameter count {n_params} != expected {expected_param_count(config)}")
    say(f"{config.run_name}: {n_params} trainable parameters")
    opt = AdamState.init(n_params, lr=config.lr)
    records: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        try:
            model, opt, trainloss = train_epoch(model, train_data, config, opt,
                                                rng_loop, epoch)
        except TrainingFailure as failure:
            failure.records = records
            raise
        record = _evaluate(model, config, test_data, epoch, trainloss)
        records.append(record)
        say(f"epoch {epoch}: trainloss {trainloss:.4f} testloss "
            f"{record.testloss:.4f} accuracy {record.accuracy:.4f} "
            f"maxErrRate {record.max_err_rate:.4f}")
    return ExperimentResult(config=config, records=records, model=model,
                            vocab=vocab)
