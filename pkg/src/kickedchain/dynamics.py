"""Stroboscopic evolution of the Neel state and its half-chain observables."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import SectorBasis, enumerate_sector, popcount, rank
from .floquet import FloquetDecomposition

NORM_TOL = 1e-6


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SectorState:
    amplitudes: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def log_time_grid(t_max: int = 10**6, n_points: int = 120) -> np.ndarray:
    """Log-spaced kick counts in ``[1, t_max]``, rounded and deduplicated."""
    if t_max < 1 or n_points < 1:
        raise ValueError("t_max and n_points must be >= 1")
    t = np.unique(np.rint(np.logspace(0, np.log10(t_max), n_points)).astype(np.int64))
    return t[t >= 1]


def neel_state(basis: SectorBasis) -> SectorState:
    """|up down up down ...> with up spins on odd sites."""
    L = basis.L
    if L % 2 or basis.n_up != L // 2:
        raise ValueError("Neel state needs even L and n_up = L/2")
    config = sum(1 << (L - site) for site in range(1, L + 1, 2))
    psi = np.zeros(basis.dim, dtype=complex)
    psi[rank(basis, config)] = 1.0
    return SectorState(psi)


def evolve_stroboscopic(decomp: FloquetDecomposition, psi0: SectorState, times) -> list[SectorState]:
    """``U_F^t |psi0>`` for each integer ``t`` via the eigenphases."""
    return [SectorState(a) for a in evolve_amplitudes(decomp, psi0.amplitudes, times)]


def evolve_amplitudes(decomp: FloquetDecomposition, psi0: np.ndarray, times) -> np.ndarray:
    """Array form of :func:`evolve_stroboscopic`, shape ``(len(times), dim)``."""
    times = np.asarray(times)
    if times.ndim != 1 or np.any(times < 0) or np.any(times != np.round(times)):
        raise ValueError("times must be non-negative integers")
    psi0 = np.asarray(psi0, dtype=complex)
    coeff = decomp.V.conj().T @ psi0
    angles = np.outer(decomp.phases, times.astype(float))
    out = (decomp.V @ (np.exp(1j * angles) * coeff[:, None])).T
    out[times == 0] = psi0
    drift = np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(psi0))
    if np.any(drift > NORM_TOL):
        bad = int(times[np.argmax(drift)])
        raise NormDriftError(f"norm drift {drift.max():.2e} at t={bad}")
    return out


@lru_cache(maxsize=16)
def _schmidt_blocks(basis: SectorBasis) -> tuple:
    """``(state_indices, rows, cols, n_rows, n_cols)`` per left-half up-count."""
    L = basis.L
    if L % 2:
        raise ValueError("half-chain cut needs even L")
    half = L // 2
    left = basis.states >> half
    right = basis.states & ((1 << half) - 1)
    n_left = popcount(left)
    blocks = []
    for n in range(max(0, basis.n_up - half), min(half, basis.n_up) + 1):
        idx = np.flatnonzero(n_left == n)
        lb = enumerate_sector(half, n)
        rb = enumerate_sector(half, basis.n_up - n)
        blocks.append((idx, rank(lb, left[idx]), rank(rb, right[idx]), lb.dim, rb.dim))
    return tuple(blocks)


def _entropy_from_probs(p: np.ndarray) -> np.ndarray:
    p = np.where(p > 0, p, 1.0)
    return -np.sum(p * np.log(p), axis=-1)


def entanglement_entropies(amplitudes: np.ndarray, basis: SectorBasis) -> np.ndarray:
    """Half-chain von Neumann entropies (natural log) for a stack of states.

    ``amplitudes`` has shape ``(..., dim)``. Each fixed left-half up-count is
    a separate Schmidt block; singular values of all blocks are pooled.
    """
    amps = np.asarray(amplitudes, dtype=complex)
    batch = amps.shape[:-1]
    amps = amps.reshape(-1, basis.dim)
    probs = []
    for idx, rows, cols, nr, nc in _schmidt_blocks(basis):
        M = np.zeros((amps.shape[0], nr, nc), dtype=complex)
        M[:, rows, cols] = amps[:, idx]
        s = np.linalg.svd(M, compute_uv=False)
        probs.append(s**2)
    p = np.concatenate(probs, axis=1)
    return _entropy_from_probs(p).reshape(batch)


def entanglement_entropy(psi: SectorState, basis: SectorBasis) -> float:
    return float(entanglement_entropies(psi.amplitudes, basis))


@lru_cache(maxsize=16)
def _staggered_weights(basis: SectorBasis) -> np.ndarray:
    signs = np.array([1.0 if site % 2 else -1.0 for site in range(1, basis.L + 1)])
    return (2.0 / basis.L) * (basis.spins() @ signs)


def imbalances(amplitudes: np.ndarray, basis: SectorBasis) -> np.ndarray:
    """``(2/L) sum_i (-1)^(i+1) <S^z_i>`` for a stack of states."""
    probs = np.abs(np.asarray(amplitudes)) ** 2
    return probs @ _staggered_weights(basis)


def imbalance(psi: SectorState, basis: SectorBasis) -> float:
    return float(imbalances(psi.amplitudes, basis))
