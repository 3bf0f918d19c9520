"""Suite configuration: TOML in, validated ``SuiteConfig`` out.

Example::

    scenario = "linear"
    sample_sizes = [50, 200, 1000, 4000]
    replications = 10
    master_seed = 2024
    sigma_setting = [0.75]        # R^2 targets for linear/nonlinear
    output_dir = "out/linear"
    parallelism = 4
    full_grid = false
    epochs = 50

    [grid]
    hidden_size = [5, 20]         # overrides one axis of the default grid

``grid.<axis> = [...]`` dotted keys work too. For the time-series
scenarios ``sigma_setting`` is the innovation variance itself; the
classification and image scenarios ignore it.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .datagen import DEFAULT_MC_SEED
from .experiment import AXES, FAMILY_OF, ConfigurationError, GridSpec

OUTPUT_DIR_ENV = "HPSPLIT_OUTPUT_DIR"

REQUIRED = ("scenario", "sample_sizes")
OPTIONAL = {
    "grid": None, "replications": 10, "master_seed": 0, "sigma_setting": None,
    "mnist_images_path": None, "mnist_labels_path": None, "output_dir": "hpsplit-out",
    "parallelism": 1, "full_grid": False, "epochs": 50,
    # Monte-Carlo settings for the nonlinear variance and the classification centring
    "mc_samples": 1_000_000, "mc_seed": DEFAULT_MC_SEED,
    # reference classifier for the image scenarios
    "reference_epochs": 5, "reference_train_size": None,
}
DEFAULT_SIGMA = {"linear": 0.75, "nonlinear": 0.75, "ts_linear": 1.0, "ts_nonlinear": 1.0}


class ConfigError(ConfigurationError):
    """Carries every problem found, as ``(key, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.problems))


@dataclass
class SuiteConfig:
    scenario: str
    sample_sizes: list
    replications: int = 10
    master_seed: int = 0
    sigma_settings: list = field(default_factory=list)
    grid_overrides: dict = field(default_factory=dict)
    full_grid: bool = False
    epochs: int = 50
    output_dir: str = "hpsplit-out"
    parallelism: int = 1
    mnist_images_path: str | None = None
    mnist_labels_path: str | None = None
    mc_samples: int = 1_000_000
    mc_seed: int = DEFAULT_MC_SEED
    reference_epochs: int = 5
    reference_train_size: int | None = None

    @property
    def family(self):
        return FAMILY_OF[self.scenario]

    def grid(self) -> GridSpec:
        return GridSpec.default(self.scenario, full=self.full_grid, epochs=self.epochs,
                                overrides=self.grid_overrides)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate(raw: dict, base_dir=".") -> SuiteConfig:
    problems = []
    unknown = sorted(set(raw) - set(REQUIRED) - set(OPTIONAL))
    problems += [(k, "unknown key") for k in unknown]
    problems += [(k, "missing required key") for k in REQUIRED if k not in raw]
    v = {**{k: d for k, d in OPTIONAL.items()}, **raw}

    scenario = v.get("scenario")
    if "scenario" in raw and scenario not in FAMILY_OF:
        problems.append(("scenario", f"must be one of {sorted(FAMILY_OF)}"))
        scenario = None

    sizes = v.get("sample_sizes")
    if "sample_sizes" in raw:
        if not (isinstance(sizes, list) and sizes and all(_is_int(n) and n >= 1 for n in sizes)):
            problems.append(("sample_sizes", "must be a non-empty list of positive integers"))
        elif any(b <= a for a, b in zip(sizes, sizes[1:])):
            problems.append(("sample_sizes", "must be strictly increasing"))

    for key, lo in (("replications", 1), ("parallelism", 1), ("epochs", 1), ("mc_samples", 100_000),
                    ("reference_epochs", 1)):
        if not (_is_int(v[key]) and v[key] >= lo):
            problems.append((key, f"must be an integer >= {lo}"))
    for key in ("master_seed", "mc_seed"):
        if not (_is_int(v[key]) and v[key] >= 0):
            problems.append((key, "must be a non-negative integer"))
    if v["reference_train_size"] is not None and not (
            _is_int(v["reference_train_size"]) and v["reference_train_size"] >= 1):
        problems.append(("reference_train_size", "must be a positive integer"))
    if not isinstance(v["full_grid"], bool):
        problems.append(("full_grid", "must be true or false"))
    if not isinstance(v["output_dir"], str) or not v["output_dir"]:
        problems.append(("output_dir", "must be a non-empty string"))

    sigma = v["sigma_setting"]
    if sigma is None:
        sigmas = [DEFAULT_SIGMA.get(scenario, 1.0)]
    else:
        sigmas = sigma if isinstance(sigma, list) else [sigma]
    if not sigmas or not all(isinstance(s, (int, float)) and not isinstance(s, bool) for s in sigmas):
        problems.append(("sigma_setting", "must be a number or a list of numbers"))
    elif scenario in ("linear", "nonlinear") and not all(0 < s < 1 for s in sigmas):
        problems.append(("sigma_setting", "R^2 targets must lie in (0, 1)"))
    elif scenario in ("ts_linear", "ts_nonlinear") and not all(s > 0 for s in sigmas):
        problems.append(("sigma_setting", "noise variances must be positive"))
    if len(set(map(str, sigmas))) != len(sigmas):
        problems.append(("sigma_setting", "values must be distinct"))

    grid = v["grid"] or {}
    if not isinstance(grid, dict):
        problems.append(("grid", "must be a table of axis = [values]"))
        grid = {}
    if scenario is not None:
        axes = AXES[FAMILY_OF[scenario]]
        for axis, values in grid.items():
            if axis not in axes:
                problems.append((f"grid.{axis}", f"not an axis of the {FAMILY_OF[scenario]} grid {axes}"))
            elif not isinstance(values, list) or not values:
                problems.append((f"grid.{axis}", "must be a non-empty list"))

    paths = {}
    if scenario in ("mnist", "fashion_mnist"):
        for key in ("mnist_images_path", "mnist_labels_path"):
            p = v[key]
            if not p:
                problems.append((key, "required for image scenarios"))
                continue
            p = os.path.join(base_dir, p) if not os.path.isabs(p) else p
            if not os.path.isfile(p):
                problems.append((key, f"file not found: {p}"))
            paths[key] = p

    if problems:
        raise ConfigError(problems)
    cfg = SuiteConfig(
        scenario=scenario, sample_sizes=list(sizes), replications=v["replications"],
        master_seed=v["master_seed"], sigma_settings=[float(s) for s in sigmas],
        grid_overrides=dict(grid), full_grid=v["full_grid"], epochs=v["epochs"],
        output_dir=v["output_dir"], parallelism=v["parallelism"],
        mnist_images_path=paths.get("mnist_images_path"),
        mnist_labels_path=paths.get("mnist_labels_path"),
        mc_samples=v["mc_samples"], mc_seed=v["mc_seed"],
        reference_epochs=v["reference_epochs"], reference_train_size=v["reference_train_size"],
    )
    try:
        cfg.grid()
    except ConfigurationError as exc:
        raise ConfigError([("grid", str(exc))]) from None
    return cfg


def load_config(path, environ=None) -> SuiteConfig:
    """Parse and validate a TOML file; the output-dir variable overrides the file."""
    environ = os.environ if environ is None else environ
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([("<file>", f"cannot read {path}: {exc.strerror}")]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([("<file>", f"not valid TOML: {exc}")]) from None
    cfg = validate(raw, base_dir=os.path.dirname(os.path.abspath(path)))
    if environ.get(OUTPUT_DIR_ENV):
        cfg.output_dir = environ[OUTPUT_DIR_ENV]
    return cfg
