"""Disorder-sample sweeps with deterministic seeding and aggregation.

Every job's kick angles come from a Philox stream keyed by a seed derived
from ``(master_seed, grid_index, sample_index)`` through ``SeedSequence``,
so results do not depend on scheduling or worker count. Per-sample results
are buffered and folded in sample order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .basis import enumerate_sector
from .dynamics import entanglement_entropies, evolve_amplitudes, imbalances, neel_state
from .floquet import floquet_decomposition, sample_kick_angles
from .hamiltonian import ChainConfig, HermitianSpectrum, build_hamiltonian, diagonalize_hermitian
from .spectral_stats import gap_ratios

log = logging.getLogger(__name__)

AXIS_ORDER = ("L", "a", "b", "theta", "tau", "J_x", "J_z")
KINDS = ("levelstats", "dynamics")
MAX_FAILURE_FRACTION = 0.01


class SweepError(RuntimeError):
    pass


def derive_seed(master_seed: int, grid_index: int, sample_index: int) -> int:
    """64-bit job seed; a pure function of its three arguments."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(grid_index), int(sample_index)))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def kick_stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


class StreamingMoments:
    """Welford mean/variance accumulator for scalars or equally shaped arrays."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def add(self, x):
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (x - self.mean)

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        """Chan et al. pairwise combination; returns a new accumulator."""
        out = StreamingMoments()
        n = self.count + other.count
        if n == 0:
            return out
        delta = np.asarray(other.mean) - self.mean
        out.count = n
        out.mean = self.mean + delta * other.count / n
        out._m2 = self._m2 + other._m2 + delta**2 * self.count * other.count / n
        return out

    @property
    def variance(self):
        if self.count < 2:
            return np.full(np.shape(self.mean), np.nan) if np.ndim(self.mean) else math.nan
        return self._m2 / (self.count - 1)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.count) if self.count else math.nan


@dataclass(frozen=True)
class SweepPlan:
    """A grid of chain configurations times disorder samples.

    ``axes`` maps any of ``AXIS_ORDER`` to a list of values; unspecified
    parameters come from ``base``. With ``uniform=True`` and no ``b`` axis,
    ``b`` follows ``a`` at every grid point.
    """

    base: ChainConfig
    axes: dict = field(default_factory=dict)
    samples: int = 1
    master_seed: int = 0
    kind: str = "levelstats"
    times: tuple = ()
    uniform: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        for name, values in self.axes.items():
            if name not in AXIS_ORDER:
                raise ValueError(f"unknown sweep axis {name!r}")
            if len(values) == 0:
                raise ValueError(f"sweep axis {name!r} is empty")
        if self.kind == "dynamics":
            t = np.asarray(self.times)
            if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0) or np.any(t < 0):
                raise ValueError("dynamics plans need a strictly increasing, non-negative time grid")

    def grid(self) -> list[ChainConfig]:
        names = [n for n in AXIS_ORDER if n in self.axes]
        points = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            values = dict(zip(names, combo))
            if self.uniform and "b" not in values:
                values["b"] = values.get("a", self.base.a)
            points.append(dataclasses.replace(self.base, **values))
        return points

    def to_dict(self) -> dict:
        return {
            "base": self.base.as_dict(),
            "axes": {n: [_jsonable(v) for v in self.axes[n]] for n in AXIS_ORDER if n in self.axes},
            "samples": self.samples,
            "master_seed": int(self.master_seed),
            "kind": self.kind,
            "times": [int(t) for t in self.times],
            "uniform": self.uniform,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v.item() if isinstance(v, np.generic) else v


@dataclass(frozen=True)
class Job:
    grid_index: int
    sample_index: int
    config: ChainConfig
    seed: int


def plan_sweep(plan: SweepPlan) -> list[Job]:
    jobs = [
        Job(g, s, cfg, derive_seed(plan.master_seed, g, s))
        for g, cfg in enumerate(plan.grid())
        for s in range(plan.samples)
    ]
    if len({job.seed for job in jobs}) != len(jobs):
        raise SweepError("derived seed collision")
    return jobs


def hamiltonian_spectrum(cfg: ChainConfig) -> HermitianSpectrum:
    """Spectrum of the static Hamiltonian, shared by all kicks and periods."""
    return _spectrum(dataclasses.replace(cfg, theta=0.0, tau=0.0))


@lru_cache(maxsize=8)
def _spectrum(cfg: ChainConfig) -> HermitianSpectrum:
    basis = enumerate_sector(cfg.L, cfg.L // 2)
    return diagonalize_hermitian(build_hamiltonian(cfg, basis), label=cfg.label())


def _decomposition(cfg: ChainConfig, seed: int, master_seed=None, sample_index=None):
    basis = enumerate_sector(cfg.L, cfg.L // 2)
    spectrum = hamiltonian_spectrum(cfg)
    kick = sample_kick_angles(cfg.theta, cfg.L, kick_stream(seed), master_seed, sample_index)
    return basis, floquet_decomposition(spectrum, kick, cfg.tau, basis, label=cfg.label())


def level_statistics_sample(cfg: ChainConfig, master_seed: int, grid_index: int, sample_index: int) -> dict:
    seed = derive_seed(master_seed, grid_index, sample_index)
    return _levelstats_job(cfg, seed)


def _levelstats_job(cfg: ChainConfig, seed: int) -> dict:
    _, decomp = _decomposition(cfg, seed)
    ratios = gap_ratios(decomp.phases)
    return {"mean_r": ratios.mean_r, "excluded_ratios": ratios.excluded}


def _dynamics_job(cfg: ChainConfig, seed: int, times) -> dict:
    basis, decomp = _decomposition(cfg, seed)
    amps = evolve_amplitudes(decomp, neel_state(basis).amplitudes, np.asarray(times))
    return {"SvN": entanglement_entropies(amps, basis), "imbalance": imbalances(amps, basis)}


def run_job(kind: str, cfg: ChainConfig, seed: int, times=()) -> dict:
    if kind == "levelstats":
        return _levelstats_job(cfg, seed)
    return _dynamics_job(cfg, seed, times)


def _safe_job(args):
    kind, cfg, seed, times = args
    try:
        return run_job(kind, cfg, seed, times), None
    except Exception as exc:  # a failed sample is counted, not fatal
        return None, f"{type(exc).__name__}: {exc}"


OBSERVABLES = {"levelstats": ("mean_r",), "dynamics": ("SvN", "imbalance")}


@dataclass(frozen=True)
class AggregateRecord:
    grid_index: int
    point: dict
    observable: str
    mean: object
    stderr: object
    count: int
    excluded: int

    def to_json(self) -> dict:
        def conv(x):
            return np.asarray(x, dtype=float).tolist()

        return {
            "grid_index": self.grid_index,
            "point": self.point,
            "observable": self.observable,
            "mean": conv(self.mean),
            "stderr": conv(self.stderr),
            "count": self.count,
            "excluded": self.excluded,
        }

    @classmethod
    def from_json(cls, d: dict) -> "AggregateRecord":
        mean, stderr = d["mean"], d["stderr"]
        if isinstance(mean, list):
            mean, stderr = np.array(mean), np.array(stderr)
        return cls(d["grid_index"], d["point"], d["observable"], mean, stderr, d["count"], d["excluded"])


def aggregate(plan: SweepPlan, grid_index: int, cfg: ChainConfig, results: list) -> list[AggregateRecord]:
    """Fold per-sample outputs (ordered by sample index) into records."""
    failures = [err for _, err in results if err is not None]
    if len(failures) > MAX_FAILURE_FRACTION * len(results):
        raise SweepError(
            f"{len(failures)}/{len(results)} samples failed at grid point {grid_index} "
            f"({cfg.label()}); first error: {failures[0]}"
        )
    for err in failures:
        log.warning("excluded failed sample at %s: %s", cfg.label(), err)
    records = []
    point = cfg.as_dict()
    for name in OBSERVABLES[plan.kind]:
        acc = StreamingMoments()
        for res, err in results:
            if err is None:
                acc.add(res[name])
        records.append(
            AggregateRecord(grid_index, point, name, acc.mean, acc.stderr, acc.count, len(failures))
        )
    return records


def _load_checkpoint(path: Path, plan: SweepPlan) -> dict[int, list[AggregateRecord]]:
    done: dict[int, list[AggregateRecord]] = {}
    if not path.exists():
        return done
    with path.open() as fh:
        header = json.loads(fh.readline() or "{}")
        if header.get("fingerprint") != plan.fingerprint():
            raise SweepError(f"checkpoint {path} belongs to a different plan")
        for line in fh:
            if not line.strip():
                continue
            entry = json.loads(line)
            done[entry["grid_index"]] = [AggregateRecord.from_json(r) for r in entry["records"]]
    return done


def run_sweep(
    plan: SweepPlan,
    workers: int = 1,
    checkpoint: Optional[str | Path] = None,
) -> list[AggregateRecord]:
    """Execute every job of ``plan`` and aggregate per grid point.

    At most ``workers`` processes run concurrently. With ``checkpoint`` set,
    each finished grid point is appended to that JSON-lines file and points
    already present are skipped on the next call.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    grid = plan.grid()
    jobs = plan_sweep(plan)
    ckpt = Path(checkpoint) if checkpoint else None
    done = _load_checkpoint(ckpt, plan) if ckpt else {}
    if ckpt and not ckpt.exists():
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        ckpt.write_text(json.dumps({"fingerprint": plan.fingerprint(), "plan": plan.to_dict()}) + "\n")

    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    mapper = executor.map if executor else map
    records: list[AggregateRecord] = []
    try:
        for g, cfg in enumerate(grid):
            if g in done:
                records.extend(done[g])
                continue
            args = [(plan.kind, job.config, job.seed, plan.times) for job in jobs if job.grid_index == g]
            if executor:
                results = list(mapper(_safe_job, args, chunksize=max(1, len(args) // (4 * workers))))
            else:
                results = list(mapper(_safe_job, args))
            point_records = aggregate(plan, g, cfg, results)
            records.extend(point_records)
            log.info("grid point %d/%d done: %s", g + 1, len(grid), cfg.label())
            if ckpt:
                with ckpt.open("a") as fh:
                    fh.write(json.dumps({"grid_index": g, "records": [r.to_json() for r in point_records]}) + "\n")
    finally:
        if executor:
            executor.shutdown()
    return records
