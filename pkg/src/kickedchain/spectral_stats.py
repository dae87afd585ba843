"""Consecutive-gap ratios of eigenphases on the unit circle."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

MIN_GAP = 1e-12
GAP_CONVENTION = "circular (wrap-around gap included)"

POISSON_MEAN_R = 2 * np.log(2) - 1
COE_MEAN_R = 0.5307


@dataclass(frozen=True)
class GapRatioSet:
    r_values: np.ndarray
    mean_r: float
    dim: int
    excluded: int = 0


def gap_ratios(phases) -> GapRatioSet:
    """Ratios ``min(d_k, d_{k+1}) / max(d_k, d_{k+1})`` of circularly adjacent gaps.

    ``phases`` must be sorted ascending within ``(-pi, pi]``. Gaps below
    1e-12 are treated as solver degeneracies: every ratio touching one is
    dropped and counted in ``excluded``.
    """
    phi = np.asarray(phases, dtype=float)
    if phi.ndim != 1 or len(phi) < 3:
        raise ValueError("need at least 3 phases for gap ratios")
    if np.any(np.diff(phi) < 0):
        raise ValueError("phases must be sorted ascending")
    gaps = np.empty_like(phi)
    gaps[:-1] = np.diff(phi)
    gaps[-1] = 2 * np.pi - (phi[-1] - phi[0])
    nxt = np.roll(gaps, -1)
    ok = (gaps >= MIN_GAP) & (nxt >= MIN_GAP)
    r = np.minimum(gaps[ok], nxt[ok]) / np.maximum(gaps[ok], nxt[ok])
    excluded = int(len(phi) - ok.sum())
    if excluded:
        log.debug("excluded %d gap ratios touching degenerate gaps", excluded)
    if len(r) == 0:
        raise ValueError("all gaps are degenerate")
    return GapRatioSet(r, float(r.mean()), len(phi), excluded)


def mean_r_over_ensemble(jobs, master_seed: int = 0):
    """Average the per-sample ``mean_r`` over disorder samples.

    ``jobs`` is a sequence of ``(ChainConfig, sample_index)``; all configs
    must describe the same grid point. Returns ``(mean, standard_error)``.
    """
    from .ensemble import level_statistics_sample, StreamingMoments, SweepError

    jobs = list(jobs)
    if len(jobs) < 2:
        raise ValueError("need at least 2 samples")
    configs = {cfg for cfg, _ in jobs}
    if len(configs) != 1:
        raise ValueError("all jobs must share one configuration")
    acc = StreamingMoments()
    failures = 0
    for cfg, index in sorted(jobs, key=lambda job: job[1]):
        try:
            acc.add(level_statistics_sample(cfg, master_seed, 0, index)["mean_r"])
        except Exception:
            log.exception("sample %d failed for %s", index, cfg.label())
            failures += 1
    if failures > 0.01 * len(jobs):
        raise SweepError(f"{failures}/{len(jobs)} samples failed for {cfg.label()}")
    return acc.mean, acc.stderr
