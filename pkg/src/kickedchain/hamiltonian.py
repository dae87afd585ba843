"""Long-range XXZ-type chain Hamiltonian in a magnetization sector.

    H = - sum_{i != j} [ J_x / |i-j|^a (S^x_i S^x_j + S^y_i S^y_j)
                         + J_z / |i-j|^b  S^z_i S^z_j ]

on an open chain. The default ``pair_sum="ordered"`` runs over ordered
pairs, so every bond enters twice; ``pair_sum="unordered"`` counts each
pair once (``i < j``) and halves all couplings.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .basis import SectorBasis, rank

# Exponents at or above this value mean nearest-neighbour coupling only.
NEAREST_NEIGHBOR_EXPONENT = 1e3

PAIR_SUM_CHOICES = {"ordered": 2.0, "unordered": 1.0}


class DiagonalizationError(RuntimeError):
    """An eigensolver failed or its output violated a residual check."""


def parse_exponent(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in {"inf", "infinity", "oo"}:
            return math.inf
        value = float(value)
    return float(value)


@dataclass(frozen=True)
class ChainConfig:
    L: int
    a: float
    b: float
    theta: float = math.pi
    tau: float = 0.1
    J_x: float = 1.0
    J_z: float = 1.0
    pair_sum: str = "ordered"

    def __post_init__(self):
        if self.pair_sum not in PAIR_SUM_CHOICES:
            raise ValueError(f"pair_sum must be one of {sorted(PAIR_SUM_CHOICES)}, got {self.pair_sum!r}")
        object.__setattr__(self, "a", parse_exponent(self.a))
        object.__setattr__(self, "b", parse_exponent(self.b))
        if not (isinstance(self.L, (int, np.integer)) and self.L >= 2):
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"exponents must be positive, got a={self.a}, b={self.b}")
        if not 0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not self.tau >= 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")

    def label(self) -> str:
        return (
            f"L={self.L} a={self.a:g} b={self.b:g} theta={self.theta:g} "
            f"tau={self.tau:g} J_x={self.J_x:g} J_z={self.J_z:g} pairs={self.pair_sum}"
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        for key in ("a", "b"):
            if math.isinf(d[key]):
                d[key] = "inf"
        return d


def coupling(distance, exponent: float):
    """``1 / distance**exponent`` with the nearest-neighbour sentinel."""
    distance = np.asarray(distance, dtype=float)
    if exponent >= NEAREST_NEIGHBOR_EXPONENT:
        return np.where(distance == 1, 1.0, 0.0)
    return distance ** (-exponent)


def build_hamiltonian(config: ChainConfig, basis: SectorBasis) -> np.ndarray:
    """Dense real symmetric Hamiltonian in ``basis``.

    Parameters
    ----------
    config : ChainConfig
        Couplings, exponents and pair convention; ``theta`` and ``tau``
        are ignored here.
    basis : SectorBasis
        Sector to project on; ``basis.L`` must equal ``config.L``.
    """
    if basis.L != config.L:
        raise ValueError(f"basis has L={basis.L} but config has L={config.L}")
    L = config.L
    states = basis.states
    dim = basis.dim
    H = np.zeros((dim, dim))
    rows = np.arange(dim)
    diag = np.zeros(dim)
    mult = PAIR_SUM_CHOICES[config.pair_sum]
    for i in range(1, L + 1):
        bit_i = (states >> (L - i)) & 1
        for j in range(i + 1, L + 1):
            bit_j = (states >> (L - j)) & 1
            d = j - i
            jz = mult * config.J_z * coupling(d, config.b)
            if jz != 0:
                # S^z_i S^z_j = +1/4 when aligned, -1/4 otherwise
                diag -= jz * np.where(bit_i == bit_j, 0.25, -0.25)
            jx = mult * config.J_x * coupling(d, config.a)
            if jx != 0:
                hop = bit_i != bit_j
                src = rows[hop]
                dst = rank(basis, states[hop] ^ ((1 << (L - i)) | (1 << (L - j))))
                H[src, dst] -= 0.5 * jx
    H[rows, rows] = diag
    return H


@dataclass(frozen=True, eq=False)
class HermitianSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def propagator(self, tau: float) -> np.ndarray:
        """``exp(-i H tau)`` assembled from the eigendecomposition."""
        V = self.eigenvectors
        return (V * np.exp(-1j * self.eigenvalues * tau)) @ V.conj().T


def diagonalize_hermitian(H: np.ndarray, label: str = "", check: bool = False) -> HermitianSpectrum:
    """Full eigendecomposition of a real symmetric (or Hermitian) matrix.

    With ``check=True`` the reconstruction and orthonormality residuals are
    verified, which costs two extra matrix products.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(f"eigh failed for {label or 'matrix'}: {exc}") from exc
    if check:
        dim = len(w)
        recon = np.max(np.abs((V * w) @ V.conj().T - H), initial=0.0)
        ortho = np.max(np.abs(V.conj().T @ V - np.eye(dim)), initial=0.0)
        if recon > 1e-10 * max(dim, 1) or ortho > 1e-12:
            raise DiagonalizationError(
                f"eigh residuals too large for {label or 'matrix'}: "
                f"reconstruction {recon:.2e}, orthonormality {ortho:.2e}"
            )
    return HermitianSpectrum(w, V)
