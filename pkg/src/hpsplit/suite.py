"""Run a configured n-sweep: every (setting, n, replication) task, then aggregate."""
from __future__ import annotations

import datetime as _dt
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__, datagen
from .config import SuiteConfig
from .datagen import ScenarioSpec
from .experiment import expand_grid, run_replication
from .metrics import aggregate_ratios, write_records
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Setting:
    label: str
    scenario: object  # ScenarioSpec, or the image scenario name


def _fmt_num(x):
    return f"{x:g}"


def settings_for(cfg: SuiteConfig, constants=None):
    """One Setting per sigma value; the label names it in the outputs."""
    kind = cfg.scenario
    if kind in ("mnist", "fashion_mnist"):
        return [Setting(kind, kind)]
    if kind == "classification":
        return [Setting(kind, ScenarioSpec(kind, mu=constants.classification_mu))]
    out = []
    for s in cfg.sigma_settings:
        if kind == "linear":
            spec = ScenarioSpec(kind, datagen.sigma2_for_r2(datagen.LINEAR_SIGNAL_VARIANCE, s))
            label = f"{kind}-r2={_fmt_num(s)}"
        elif kind == "nonlinear":
            spec = ScenarioSpec(kind, datagen.sigma2_for_r2(constants.nonlinear_signal_variance, s))
            label = f"{kind}-r2={_fmt_num(s)}"
        else:
            spec = ScenarioSpec(kind, s)
            label = f"{kind}-sigma2={_fmt_num(s)}"
        out.append(Setting(label, spec))
    return out


_POOL = None


def _init_worker(pool):
    global _POOL
    _POOL = pool


def _task(args):
    label, scenario, grid, n, seed, rep = args
    return label, n, rep, run_replication(scenario, grid, n, seed, rep, image_pool=_POOL)


def _image_pool(cfg: SuiteConfig, meta):
    from . import images

    image_set = images.load_image_set(cfg.mnist_images_path, cfg.mnist_labels_path, cfg.scenario)
    ref_cfg = images.ReferenceConfig(epochs=cfg.reference_epochs, seed=cfg.master_seed,
                                     train_size=cfg.reference_train_size)
    log.info("training the reference classifier on %s images", ref_cfg.train_size or len(image_set))
    model = images.train_reference_model(image_set, ref_cfg)
    meta["reference_model"] = model.metadata
    return images.build_pool(image_set, model)


def run_suite(cfg: SuiteConfig, write=True, plot=True):
    """Execute the sweep; returns ``(records_by_label, summaries, paths)``.

    Output values never depend on ``cfg.parallelism``: records are keyed by
    (label, n, replication) and reduced in that canonical order.
    """
    grid = cfg.grid()
    meta = {"config": asdict(cfg), "grid_axes": {k: list(v) for k, v in grid.axes.items()},
            "grid_fixed": grid.fixed, "grid_size": grid.size}
    constants = None
    if cfg.scenario in ("nonlinear", "classification"):
        constants = datagen.estimate_constants(cfg.mc_samples, cfg.mc_seed)
        meta["constants"] = asdict(constants)
    pool = _image_pool(cfg, meta) if grid.family == "cnn" else None
    settings = settings_for(cfg, constants)
    meta["settings"] = {s.label: (asdict(s.scenario) if isinstance(s.scenario, ScenarioSpec)
                                  else s.scenario) for s in settings}
    meta["grid_values"] = [dict(hp.values) for hp in expand_grid(grid)]
    meta["replication_seeds"] = {
        rep: {role: derive_seed(cfg.master_seed, rep, role)
              for role in ("data-inputs", "data-noise", "split", "replication")}
        for rep in range(cfg.replications)}

    tasks = [(s.label, s.scenario, grid, n, cfg.master_seed, rep)
             for s in settings for n in cfg.sample_sizes for rep in range(cfg.replications)]
    results = {}
    if cfg.parallelism > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism, initializer=_init_worker,
                                 initargs=(pool,)) as ex:
            for label, n, rep, rec in ex.map(_task, tasks):
                results[label, n, rep] = rec
    else:
        _init_worker(pool)
        try:
            for t in tasks:
                label, n, rep, rec = _task(t)
                log.info("%s n=%d rep=%d selected=%d", label, n, rep, rec.selected_index)
                results[label, n, rep] = rec
        finally:
            _init_worker(None)

    records, summaries = {}, []
    for s in settings:
        records[s.label] = []
        for n in cfg.sample_sizes:
            recs = [results[s.label, n, rep] for rep in range(cfg.replications)]
            records[s.label].extend(recs)
            summaries.append(aggregate_ratios(recs, s.label, n))

    paths = {}
    if write:
        meta.update(
            timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            versions={"hpsplit": __version__, "numpy": np.__version__,
                      "python": platform.python_version()},
            diverged_total=sum(s.diverged_count for s in summaries),
        )
        paths = write_records(records, summaries, cfg.output_dir, meta)
        if plot and len(cfg.sample_sizes) >= 2:
            from .plotting import plot_summaries
            paths["figure"] = plot_summaries(summaries, os.path.join(cfg.output_dir, "ratios.svg"))
    return records, summaries, paths
