# tools/bench.py
"""
Seeded experiment harness.

An experiment is a TOML file with tables [experiment], [distribution],
[adversary], [grid] and optional [filter] / [optimizer]. Every
(cell, trial) pair gets seed = derive_seed(base_seed, cell, trial), split into
independent data / adversary / algorithm streams, so the adversary never sees
the algorithm's randomness. Records come back in (cell, trial) order
whatever the thread count.

Usage:
    spec = load_experiment_spec("configs/eps_sweep_spike.toml")
    records = run_experiment(spec, out="eps_sweep.csv")
"""
from __future__ import annotations

import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
from jsonschema import ValidationError, validate

from ..errors import InvalidArgumentError, UnsupportedFamilyError
from ..log import get_logger
from .contamination import AdversarySpec, adversary_from_config, corrupt
from .filtering import FilterConfig
from .optimizer import PGDResult, naive_mean_pgd, robust_net_pgd, robust_pgd
from .problems import FunctionDistribution, distribution_from_config, sample_functions
from .rng import derive_seed, split_seed
from .smoothing import smooth_and_optimize

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = get_logger(__name__)

ALGORITHMS = ("robust_net_pgd", "robust_pgd", "smooth_and_optimize", "naive_mean_pgd")
SCHEMA_PATH = Path(__file__).resolve().parents[2] / "schemas" / "experiment-config.schema.json"
THREADS_ENV = "ROBUST_SCO_THREADS"
RECORD_COLUMNS = ["experiment", "cell", "trial", "seed", "family", "adversary", "algorithm",
                  "d", "n", "epsilon", "sigma", "T", "n_corrupted", "filter_calls", "filter_top_eig",
                  "filter_mass", "excess_risk", "final_risk", "min_risk"]
TIMING_COLUMN = "wall_clock_s"
_FILTER_KEYS = ("c1", "c2", "breakdown", "power_tol", "power_max_iter", "degenerate_tol", "min_tail_score")


@dataclass(frozen=True)
class GridCell:
    index: int
    d: int
    n: int
    epsilon: float
    sigma: float


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    algorithm: str
    distribution: Dict[str, Any]
    adversary: Dict[str, Any]
    grid: Dict[str, Tuple]
    trials: int = 1
    base_seed: int = 0
    tau: float = 0.05
    filter: Dict[str, Any] = field(default_factory=dict)
    optimizer: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.trials < 1:
            raise InvalidArgumentError(f"trials={self.trials} must be >= 1")
        for key in ("d", "n", "epsilon", "sigma"):
            if not self.grid.get(key):
                raise InvalidArgumentError(f"grid needs a non-empty {key!r} list")

    def cells(self) -> List[GridCell]:
        """Cartesian product of the grid in (d, n, epsilon, sigma) order."""
        g = self.grid
        return [GridCell(i, int(d), int(n), float(eps), float(sig))
                for i, (d, n, eps, sig) in enumerate(itertools.product(g["d"], g["n"], g["epsilon"], g["sigma"]))]


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    cell: int
    trial: int
    seed: int
    family: str
    adversary: str
    algorithm: str
    d: int
    n: int
    epsilon: float
    sigma: float
    T: int
    n_corrupted: int
    filter_calls: int
    filter_top_eig: float
    filter_mass: float
    excess_risk: float
    final_risk: float
    min_risk: float
    wall_clock_s: float = 0.0

    def to_row(self, include_timing: bool = False) -> dict:
        row = asdict(self)
        if not include_timing:
            row.pop(TIMING_COLUMN)
        return row


def spec_from_dict(doc: dict) -> ExperimentSpec:
    """Validate a parsed config against the schema and build the spec."""
    schema = json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))
    try:
        validate(instance=doc, schema=schema)
    except ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InvalidArgumentError(f"config invalid at {where}: {e.message}") from None
    exp = doc["experiment"]
    grid = {k: tuple(v) for k, v in doc["grid"].items()}
    return ExperimentSpec(
        name=exp["name"], algorithm=exp["algorithm"], distribution=dict(doc["distribution"]),
        adversary=dict(doc.get("adversary", {"kind": "none"})), grid=grid,
        trials=int(exp.get("trials", 1)), base_seed=int(exp.get("base_seed", 0)),
        tau=float(exp.get("tau", 0.05)), filter=dict(doc.get("filter", {})),
        optimizer=dict(doc.get("optimizer", {})))


def load_experiment_spec(path: Union[str, Path]) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"config file not found: {path}")
    with path.open("rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise InvalidArgumentError(f"{path}: {e}") from None
    return spec_from_dict(doc)


def _distribution(spec: ExperimentSpec, cell: GridCell) -> FunctionDistribution:
    return distribution_from_config(spec.distribution, cell.d, cell.sigma, cell.epsilon or None, cell.n)


def _adversary(spec: ExperimentSpec, cell: GridCell) -> AdversarySpec:
    target = None
    if "target_distribution" in spec.adversary:
        target = distribution_from_config(spec.adversary["target_distribution"], cell.d, cell.sigma,
                                          cell.epsilon or None, cell.n)
    return adversary_from_config(spec.adversary, target)


def validate_pairings(spec: ExperimentSpec) -> None:
    """Reject (distribution, adversary, algorithm) combinations that cannot run.

    Called before any trial so a bad grid fails fast.
    """
    for cell in spec.cells():
        dist = _distribution(spec, cell)
        dist.minimum_risk()
        adv = _adversary(spec, cell)
        if adv.kind == "tv_swap" and dist.family != "spike_1d":
            raise InvalidArgumentError("tv_swap pairs only with the spike_1d family")
        if not 0.0 <= cell.epsilon < 0.5:
            raise InvalidArgumentError(f"grid epsilon={cell.epsilon} must lie in [0, 1/2)")
        if spec.algorithm == "robust_net_pgd":
            if dist.beta_bar is None:
                raise UnsupportedFamilyError(
                    f"robust_net_pgd needs a smooth population risk; {dist.family} is nonsmooth "
                    f"(use smooth_and_optimize)")
            dist.smoothness_for_schedule()
        elif spec.algorithm == "smooth_and_optimize":
            if not dist.lipschitz:
                raise UnsupportedFamilyError(f"smooth_and_optimize needs a Lipschitz constant for {dist.family}")
        elif dist.beta_bar is None and not dist.lipschitz:
            raise UnsupportedFamilyError(f"{spec.algorithm} needs beta_bar or a Lipschitz constant")


def _schedule_constants(dist: FunctionDistribution) -> dict:
    if dist.beta_bar is not None:
        return {"beta_bar": dist.smoothness_for_schedule()}
    return {"lipschitz": dist.lipschitz}


def _run_algorithm(spec: ExperimentSpec, dist: FunctionDistribution, samples, cell: GridCell,
                   alg_seed: int) -> PGDResult:
    opt = spec.optimizer
    fc = FilterConfig(seed=derive_seed(alg_seed, 0), **{k: v for k, v in spec.filter.items() if k in _FILTER_KEYS})
    sigma = None if opt.get("sigma", "declared") == "estimate" else dist.sigma
    common = dict(epsilon=cell.epsilon, tau=spec.tau, T=opt.get("T"), risk_fn=dist.population_risk)
    if "t_max" in opt:
        common["t_max"] = int(opt["t_max"])
    if spec.algorithm == "robust_net_pgd":
        return robust_net_pgd(samples, dist.domain, sigma=sigma, beta_bar=dist.smoothness_for_schedule(),
                              filter_config=fc, bucketed=bool(opt.get("bucketed", False)), **common)
    if spec.algorithm == "robust_pgd":
        return robust_pgd(samples, dist.domain, sigma=sigma, filter_config=fc,
                          bucketed=bool(opt.get("bucketed", False)), **_schedule_constants(dist), **common)
    if spec.algorithm == "smooth_and_optimize":
        return smooth_and_optimize(samples, dist.domain, lipschitz=dist.lipschitz, sigma=dist.sigma,
                                   seed=derive_seed(alg_seed, 1), s=opt.get("smoothing_radius"),
                                   filter_config=fc, **common)
    return naive_mean_pgd(samples, dist.domain, sigma=dist.sigma, **_schedule_constants(dist), **common)


def write_trial_traces(spec: ExperimentSpec, cell: GridCell, trial: int, result: PGDResult,
                       trace_dir: Union[str, Path]) -> List[Path]:
    """Per-iteration PGD trace and the last filter call's trace as CSV files."""
    trace_dir = Path(trace_dir)
    trace_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{spec.name}_cell{cell.index}_trial{trial}"
    written = [trace_dir / f"{stem}_pgd.csv"]
    result.trace_frame().to_csv(written[0], index=False, float_format="%.12g")
    report = result.info.get("filter_report")
    if report is not None:
        written.append(trace_dir / f"{stem}_filter.csv")
        report.to_frame().to_csv(written[1], index=False, float_format="%.12g")
    return written


def run_trial(spec: ExperimentSpec, cell: GridCell, trial: int,
              trace_dir: Optional[Union[str, Path]] = None) -> TrialRecord:
    start = time.perf_counter()
    seed = derive_seed(spec.base_seed, cell.index, trial)
    data_seed, adv_seed, alg_seed = split_seed(seed, 3)
    dist = _distribution(spec, cell)
    if trial == 0:
        logger.debug("cell %d: %s", cell.index, dist.describe())
    clean = sample_functions(dist, cell.n, data_seed)
    contaminated = corrupt(clean, _adversary(spec, cell), cell.epsilon, adv_seed, domain=dist.domain)
    result = _run_algorithm(spec, dist, contaminated, cell, alg_seed)
    if trace_dir is not None:
        write_trial_traces(spec, cell, trial, result, trace_dir)
    final_risk = dist.population_risk(result.w_hat)
    min_risk = dist.minimum_risk()
    record = TrialRecord(
        experiment=spec.name, cell=cell.index, trial=trial, seed=seed, family=dist.family,
        adversary=contaminated.adversary, algorithm=spec.algorithm, d=cell.d, n=cell.n,
        epsilon=cell.epsilon, sigma=cell.sigma, T=result.T, n_corrupted=contaminated.n_corrupted,
        filter_calls=int(result.info.get("evaluations", result.T if "filter_report" in result.info else 0)),
        filter_top_eig=float(result.info.get("filter_top_eig", float("nan"))),
        filter_mass=float(result.info.get("filter_mass", float("nan"))),
        excess_risk=final_risk - min_risk, final_risk=final_risk, min_risk=min_risk,
        wall_clock_s=time.perf_counter() - start)
    logger.info("cell %d trial %d: d=%d n=%d eps=%.3g excess=%.4g",
                cell.index, trial, cell.d, cell.n, cell.epsilon, record.excess_risk)
    return record


def threads_from_env() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if threads < 1:
        raise InvalidArgumentError(f"{THREADS_ENV}={threads} must be >= 1")
    return threads


def run_experiment(spec: ExperimentSpec, out: Optional[Union[str, Path]] = None,
                   include_timing: bool = False, threads: Optional[int] = None,
                   trace_dir: Optional[Union[str, Path]] = None) -> List[TrialRecord]:
    """One record per (cell, trial), in that order; optionally written to CSV.

    With trace_dir set every trial also writes its PGD and filter traces there.
    """
    validate_pairings(spec)
    jobs = [(cell, trial) for cell in spec.cells() for trial in range(spec.trials)]
    threads = threads_from_env() if threads is None else threads
    logger.info("%s: %d cells x %d trials with %s on %d thread(s)",
                spec.name, len(spec.cells()), spec.trials, spec.algorithm, threads)
    if threads == 1:
        records = [run_trial(spec, cell, trial, trace_dir) for cell, trial in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda job: run_trial(spec, *job, trace_dir), jobs))
    if out is not None:
        write_records_csv(records, out, include_timing=include_timing)
    return records


def records_frame(records: Sequence[TrialRecord], include_timing: bool = False) -> pd.DataFrame:
    columns = RECORD_COLUMNS + ([TIMING_COLUMN] if include_timing else [])
    return pd.DataFrame([r.to_row(include_timing) for r in records], columns=columns)


def write_records_csv(records: Sequence[TrialRecord], path: Union[str, Path],
                      include_timing: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records, include_timing).to_csv(path, index=False, float_format="%.12g")
    return path


def read_records_csv(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"records file not found: {path}")
    df = pd.read_csv(path)
    missing = [c for c in RECORD_COLUMNS if c not in df.columns]
    if missing:
        raise InvalidArgumentError(f"{path} is missing columns {missing}")
    return df
