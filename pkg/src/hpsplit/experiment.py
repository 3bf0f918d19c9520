"""Grid expansion, sample splitting, training per lambda and selection."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .datagen import Dataset, ScenarioSpec
from .metrics import compute_L0
from .nn import (ArchSpec, DivergenceError, TrainConfig, cnn_arch, mlp_arch,
                 predict, rnn_arch, train)
from .seeding import derive_rng, derive_seed


class ConfigurationError(ValueError):
    pass


class SelectionError(RuntimeError):
    pass


class ReplicationError(RuntimeError):
    pass


FAMILY_OF = {
    "linear": "mlp", "nonlinear": "mlp", "classification": "mlp",
    "ts_linear": "rnn", "ts_nonlinear": "rnn",
    "mnist": "cnn", "fashion_mnist": "cnn",
}
AXES = {
    "mlp": ("learning_rate", "hidden_size", "depth", "batch_size"),
    "rnn": ("learning_rate", "hidden_size", "depth", "window_length"),
    "cnn": ("conv", "pool_kernel", "pool_stride"),
}

# Full hyperparameter tables.
FULL_GRIDS = {
    "linear": {"learning_rate": [0.1, 0.01, 0.001], "hidden_size": [5, 10, 20],
               "depth": [1, 2], "batch_size": [8, 16, 32]},
    "nonlinear": {"learning_rate": [0.01, 0.001], "hidden_size": [50, 100],
                  "depth": [1, 2, 3], "batch_size": [16, 32, 64]},
    "classification": {"learning_rate": [0.001, 0.0001], "hidden_size": [50, 100],
                       "depth": [1, 3, 5], "batch_size": [16, 32, 128]},
    "ts": {"learning_rate": [0.01, 0.001], "hidden_size": [50, 100],
           "depth": [1, 2], "window_length": [3, 4, 5, 6]},
    "fashion_mnist": {"conv": [(3, 4), (3, 16), (3, 64), (4, 4), (4, 16), (4, 64), (5, 4), (5, 16)],
                      "pool_kernel": [2, 3], "pool_stride": [1, 2]},
    "mnist": {"conv": [(3, 4), (3, 16), (3, 64), (4, 16), (4, 64)],
              "pool_kernel": [2, 3], "pool_stride": [1, 2]},
}

# Desk-scale defaults: subsets of the full tables, 8 configurations each.
PRUNED_GRIDS = {
    "linear": {"learning_rate": [0.1, 0.01], "hidden_size": [5, 20],
               "depth": [1, 2], "batch_size": [16]},
    "nonlinear": {"learning_rate": [0.01, 0.001], "hidden_size": [50, 100],
                  "depth": [1, 3], "batch_size": [32]},
    "classification": {"learning_rate": [0.001, 0.0001], "hidden_size": [50, 100],
                       "depth": [1, 3], "batch_size": [32]},
    "ts": {"learning_rate": [0.01, 0.001], "hidden_size": [50],
           "depth": [1, 2], "window_length": [3, 5]},
    "fashion_mnist": {"conv": [(3, 4), (3, 16), (5, 4), (5, 16)],
                      "pool_kernel": [2], "pool_stride": [1, 2]},
    "mnist": {"conv": [(3, 4), (3, 16), (4, 16), (4, 64)],
              "pool_kernel": [2], "pool_stride": [1, 2]},
}


def _table_key(kind):
    return "ts" if kind.startswith("ts_") else kind


def default_fixed(kind, epochs=50):
    family = FAMILY_OF[kind]
    fixed = {"epochs": epochs}
    if family == "mlp":
        fixed.update(activation="relu", input_dim=10 if kind == "classification" else 5)
        if kind == "classification":
            fixed.update(loss="ce", output_head="sigmoid")
        else:
            fixed.update(loss="mse", output_head="linear")
    elif family == "rnn":
        fixed.update(activation="tanh", loss="mse", output_head="linear", batch_size=32)
    else:
        fixed.update(activation="relu", loss="ce", output_head="sigmoid",
                     learning_rate=0.0005, batch_size=16, fc_hidden=128, image_side=28)
    return fixed


@dataclass
class GridSpec:
    """The finite set of candidate hyperparameters.

    ``axes`` is ordered; the enumeration is the Cartesian product with the
    last axis varying fastest. ``fixed`` holds everything not searched over.
    """

    scenario: str
    axes: dict
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in FAMILY_OF:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        family = FAMILY_OF[self.scenario]
        expected = AXES[family]
        if tuple(self.axes) != expected:
            raise ConfigurationError(
                f"{family} grid axes must be {expected} in that order, got {tuple(self.axes)}")
        for name, values in self.axes.items():
            if len(values) == 0:
                raise ConfigurationError(f"grid axis {name!r} is empty")
        self.axes = {k: [tuple(v) if isinstance(v, list) else v for v in vals]
                     for k, vals in self.axes.items()}
        self.fixed = {**default_fixed(self.scenario), **self.fixed}

    @property
    def family(self):
        return FAMILY_OF[self.scenario]

    @property
    def size(self):
        return math.prod(len(v) for v in self.axes.values())

    @classmethod
    def default(cls, scenario, full=False, epochs=50, overrides=None):
        table = (FULL_GRIDS if full else PRUNED_GRIDS)[_table_key(scenario)]
        axes = {k: list(table[k]) for k in AXES[FAMILY_OF[scenario]]}
        for k, v in (overrides or {}).items():
            if k not in axes:
                raise ConfigurationError(f"unknown grid axis {k!r} for scenario {scenario}")
            axes[k] = list(v)
        return cls(scenario, axes, {"epochs": epochs})


@dataclass(frozen=True)
class HyperParams:
    grid_index: int
    values: tuple
    arch: ArchSpec
    config: TrainConfig

    def as_dict(self):
        return dict(self.values)


def _build(grid: GridSpec, values: dict):
    f = grid.fixed
    if grid.family == "mlp":
        arch = mlp_arch(f["input_dim"], values["hidden_size"], values["depth"],
                        f["activation"], f["output_head"])
        cfg = TrainConfig(f["epochs"], values["batch_size"], f["loss"], 0,
                          values["learning_rate"])
    elif grid.family == "rnn":
        arch = rnn_arch(values["window_length"], values["hidden_size"], values["depth"],
                        f["activation"], f["output_head"])
        cfg = TrainConfig(f["epochs"], f["batch_size"], f["loss"], 0, values["learning_rate"])
    else:
        k, c = values["conv"]
        arch = cnn_arch(k, c, values["pool_kernel"], values["pool_stride"],
                        fc_hidden=f["fc_hidden"], image_side=f["image_side"],
                        activation=f["activation"], output_head=f["output_head"])
        cfg = TrainConfig(f["epochs"], f["batch_size"], f["loss"], 0, f["learning_rate"])
    return arch, cfg


def expand_grid(grid: GridSpec):
    """All lambda in canonical row-major order; ``grid_index`` is the position."""
    names = list(grid.axes)
    out = []
    for idx, combo in enumerate(itertools.product(*(grid.axes[k] for k in names))):
        values = dict(zip(names, combo))
        arch, cfg = _build(grid, values)
        out.append(HyperParams(idx, tuple(values.items()), arch, cfg))
    return out


@dataclass(frozen=True)
class SplitSpec:
    n1: int
    n2: int
    n0: int

    @classmethod
    def for_n(cls, n):
        if n < 1:
            raise ConfigurationError("sample size must be >= 1")
        return cls(n, n, max(1, n // 5))

    @property
    def total(self):
        return self.n1 + self.n2 + self.n0


def split_samples(full_set: Dataset, split: SplitSpec, seed):
    """Disjoint train/validation/test slices of a seeded permutation."""
    if len(full_set) < split.total:
        raise ConfigurationError(
            f"need {split.total} samples for split {split}, have {len(full_set)}")
    perm = np.random.default_rng(int(seed)).permutation(len(full_set))
    a, b = split.n1, split.n1 + split.n2
    return (full_set.subset(perm[:a]), full_set.subset(perm[a:b]),
            full_set.subset(perm[b:split.total]))


def _contiguous(ds: Dataset, split: SplitSpec):
    a, b = split.n1, split.n1 + split.n2
    return ds.subset(slice(0, a)), ds.subset(slice(a, b)), ds.subset(slice(b, split.total))


def select_lambda(validation_losses) -> int:
    """Index of the smallest finite loss; ties go to the smallest index."""
    best, best_val = None, math.inf
    for i, v in enumerate(validation_losses):
        if v is None or not math.isfinite(v):
            continue
        if best is None or v < best_val:
            best, best_val = i, v
    if best is None:
        raise SelectionError("every candidate diverged; nothing to select")
    return best


@dataclass(frozen=True)
class LambdaEntry:
    grid_index: int
    validation_loss: float
    oracle_loss: float
    diverged: bool = False


@dataclass
class ReplicationRecord:
    replication_id: int
    replication_seed: int
    n: int
    entries: list
    selected_index: int

    @property
    def live(self):
        return [e for e in self.entries if not e.diverged]

    @property
    def selected_l0(self):
        return self.entries[self.selected_index].oracle_loss

    @property
    def inf_l0(self):
        return min(e.oracle_loss for e in self.live)

    @property
    def ratio(self):
        return self.selected_l0 / self.inf_l0

    @property
    def diverged_count(self):
        return sum(e.diverged for e in self.entries)


def _mse(net, ds):
    r = predict(net, ds.inputs) - ds.targets
    return float(np.mean(r * r))


def _iid_data(scenario: ScenarioSpec, split, master_seed, rep):
    size = split.total
    s_in = derive_seed(master_seed, rep, "data-inputs")
    s_noise = derive_seed(master_seed, rep, "data-noise")
    if scenario.kind == "linear":
        full = datagen.gen_linear(size, scenario.sigma2, s_in, noise_seed=s_noise)
    elif scenario.kind == "nonlinear":
        full = datagen.gen_nonlinear(size, scenario.sigma2, s_in, noise_seed=s_noise)
    else:
        full = datagen.gen_classification(size, scenario.mu, s_in, noise_seed=s_noise)
    return split_samples(full, split, derive_seed(master_seed, rep, "split"))


def _ts_windows(scenario, split, master_seed, rep, windows):
    """One series serves every window length; targets are aligned across lengths."""
    l_max = max(windows)
    T = split.total + l_max
    kind = scenario.kind[3:]
    series, mean = datagen.gen_timeseries(
        kind, T, scenario.sigma2, derive_seed(master_seed, rep, "data-inputs"),
        noise_seed=derive_seed(master_seed, rep, "data-noise"))
    out = {}
    for L in windows:
        ds = datagen.sliding_window(series, L, mean, scenario.kind)
        out[L] = _contiguous(ds.subset(slice(l_max - L, None)), split)
    return out


def _image_data(pool, split, master_seed, rep):
    from .images import relabel_pool

    if split.total > len(pool):
        raise ConfigurationError(
            f"n1 + n2 + n0 = {split.total} exceeds the image pool of {len(pool)}")
    idx = derive_rng(master_seed, rep, "split").permutation(len(pool))[:split.total]
    ds = relabel_pool(pool, idx, derive_seed(master_seed, rep, "data-noise"))
    return _contiguous(ds, split)


def run_replication(scenario, grid: GridSpec, n, master_seed, replication_id,
                    image_pool=None) -> ReplicationRecord:
    """Train every lambda on one dataset draw, score and select.

    ``scenario`` is a ScenarioSpec for the synthetic processes or the string
    ``"mnist"``/``"fashion_mnist"`` together with ``image_pool``.
    """
    split = SplitSpec.for_n(n)
    kind = scenario if isinstance(scenario, str) else scenario.kind
    if FAMILY_OF.get(kind) != grid.family:
        raise ConfigurationError(f"grid for {grid.scenario} does not fit scenario {kind}")
    rep_seed = derive_seed(master_seed, replication_id, "replication")
    lambdas = expand_grid(grid)
    try:
        if grid.family == "mlp":
            data = _iid_data(scenario, split, master_seed, replication_id)
            sets = {hp.grid_index: data for hp in lambdas}
        elif grid.family == "rnn":
            by_l = _ts_windows(scenario, split, master_seed, replication_id,
                               sorted(set(grid.axes["window_length"])))
            sets = {hp.grid_index: by_l[hp.arch.input_dim] for hp in lambdas}
        else:
            if image_pool is None:
                raise ConfigurationError("image scenarios need an image pool")
            data = _image_data(image_pool, split, master_seed, replication_id)
            sets = {hp.grid_index: data for hp in lambdas}
    except (ConfigurationError, datagen.GenerationError) as exc:
        raise ReplicationError(f"replication {replication_id}: {exc}") from exc

    entries = []
    for hp in lambdas:
        tr, va, te = sets[hp.grid_index]
        cfg = TrainConfig(hp.config.epochs, hp.config.batch_size, hp.config.loss,
                          derive_seed(master_seed, replication_id, "train", hp.grid_index),
                          hp.config.learning_rate, hp.config.optimizer)
        try:
            net = train(hp.arch, cfg, tr)
            val = _mse(net, va)
            l0 = compute_L0(net, te)
            if not (math.isfinite(val) and math.isfinite(l0)):
                raise DivergenceError("non-finite validation or oracle loss")
            entries.append(LambdaEntry(hp.grid_index, val, l0, False))
        except DivergenceError:
            entries.append(LambdaEntry(hp.grid_index, math.nan, math.nan, True))
    try:
        chosen = select_lambda([e.validation_loss for e in entries])
    except SelectionError as exc:
        raise ReplicationError(f"replication {replication_id}, n={n}: {exc}") from exc
    return ReplicationRecord(replication_id, rep_seed, n, entries, chosen)
