"""Serial or process-parallel execution of experiment plans.

Results are gathered in plan order regardless of completion order, and
every worker pins BLAS/OpenMP to one thread, so CSV output does not depend
on the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ExperimentConfig
from .experiments import REGISTRY
from .report import CertificateReport, write_reports

log = logging.getLogger(__name__)


def _init_worker():
    # kept alive for the worker's lifetime
    global _limits
    _limits = threadpool_limits(1)


def _call(task):
    return task()


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> CertificateReport:
    return run_configs([cfg], threads=threads)[0]


def run_configs(configs: list[ExperimentConfig], threads: int = 1) -> list[CertificateReport]:
    plans = []
    for cfg in configs:
        tasks, keys = REGISTRY[cfg.experiment].plan(cfg)
        plans.append((cfg, tasks, keys))
    flat = [t for _, tasks, _ in plans for t in tasks]
    log.info("running %d tasks over %d experiments with %d worker(s)", len(flat), len(configs), threads)
    if threads <= 1:
        with threadpool_limits(1):
            results = [t() for t in flat]
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker) as ex:
            results = list(ex.map(_call, flat))
    reports, k = [], 0
    for cfg, tasks, keys in plans:
        chunk = results[k : k + len(tasks)]
        k += len(tasks)
        reports.append(REGISTRY[cfg.experiment].finish(cfg, keys, chunk))
    return reports


def run_and_write(configs: list[ExperimentConfig], out_dir: str | Path | None = None, threads: int = 1):
    reports = run_configs(configs, threads)
    out = Path(out_dir if out_dir is not None else configs[0].out)
    paths = write_reports(reports, out)
    return reports, paths
