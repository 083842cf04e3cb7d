"""Reduced density matrix of the central spin, thermal mixing, entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hilbert import n_spins_of

LN2 = math.log(2.0)


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """2x2 density matrix in the (up, down) = (|1>, |0>) ordering."""

    rho11: float
    rho00: float
    rho10: complex

    @property
    def rho01(self) -> complex:
        return self.rho10.conjugate()

    @property
    def trace(self) -> float:
        return self.rho11 + self.rho00

    @property
    def det(self) -> float:
        return self.rho11 * self.rho00 - abs(self.rho10) ** 2

    def matrix(self) -> np.ndarray:
        return np.array([[self.rho11, self.rho10], [self.rho01, self.rho00]], dtype=complex)


@dataclass(frozen=True)
class ThermalEnsemble:
    kT: float
    weights: np.ndarray
    energies: np.ndarray
    truncation: float  # Boltzmann factor of the highest retained level

    def __len__(self) -> int:
        return len(self.weights)


def boltzmann_weights(energies: Sequence[float], kT: float) -> ThermalEnsemble:
    """Normalized ``exp(-(e_m - e_1)/kT)`` for ascending energies.

    ``energies`` may also be a ``BathSpectrum``.
    """
    if kT <= 0:
        raise ValueError(f"kT must be positive, got {kT}")
    e = np.asarray(getattr(energies, "energies", energies), dtype=float)
    if e.size == 0:
        raise ValueError("empty spectrum")
    if np.any(np.diff(e) < 0):
        raise ValueError("energies must be ascending")
    boltz = np.exp(-(e - e[0]) / kT)
    w = boltz / boltz.sum()
    return ThermalEnsemble(kT, w, e, float(boltz[-1]))


def partial_trace_impurity(psi: np.ndarray) -> ReducedDensityMatrix:
    """Trace a full-space state over the bath; site 0 is the lowest bit."""
    psi = np.asarray(psi)
    n = n_spins_of(psi)
    if n < 1 or psi.ndim != 1:
        raise ValueError("expected a single state over at least one spin")
    up = psi[1::2]
    down = psi[0::2]
    rho11 = float(np.vdot(up, up).real)
    rho00 = float(np.vdot(down, down).real)
    rho10 = complex(np.vdot(down, up))
    return ReducedDensityMatrix(rho11, rho00, rho10)


def batch_partial_traces(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column ``(rho11, rho00, rho10)`` for a ``(dim, B)`` stack of states."""
    up = psi[1::2]
    down = psi[0::2]
    rho11 = np.einsum("ij,ij->j", up.conj(), up).real
    rho00 = np.einsum("ij,ij->j", down.conj(), down).real
    rho10 = np.einsum("ij,ij->j", down.conj(), up)
    return rho11, rho00, rho10


def thermal_reduced_density(
    members: Sequence[ReducedDensityMatrix], ensemble: ThermalEnsemble | Sequence[float]
) -> ReducedDensityMatrix:
    """Convex combination of member matrices, summed in member order."""
    w = np.asarray(getattr(ensemble, "weights", ensemble), dtype=float)
    if len(members) != len(w):
        raise ValueError(f"{len(members)} members but {len(w)} weights")
    r11 = r00 = 0.0
    r10 = 0j
    for wk, m in zip(w, members):
        r11 += wk * m.rho11
        r00 += wk * m.rho00
        r10 += wk * m.rho10
    return ReducedDensityMatrix(float(r11), float(r00), complex(r10))


def mix_batch(rho11, rho00, rho10, weights) -> ReducedDensityMatrix:
    """``thermal_reduced_density`` for arrays from ``batch_partial_traces``."""
    return thermal_reduced_density(
        [ReducedDensityMatrix(float(a), float(b), complex(c)) for a, b, c in zip(rho11, rho00, rho10)],
        weights,
    )


def _checked_det(rho: ReducedDensityMatrix) -> float:
    if abs(rho.trace - 1.0) > 1e-8:
        raise InvalidStateError(f"trace {rho.trace!r} differs from 1")
    det = rho.det
    if det < -1e-12:
        raise InvalidStateError(f"negative determinant {det!r}")
    return min(max(det, 0.0), 0.25)


def entropy(rho: ReducedDensityMatrix) -> float:
    """Von Neumann entropy in nats from the two eigenvalues of ``rho``."""
    det = _checked_det(rho)
    root = math.sqrt(1.0 - 4.0 * det)
    p_plus = 0.5 * (1.0 + root)
    # Small eigenvalue without cancellation: p+ p- = det.
    p_minus = 2.0 * det / (1.0 + root)
    return 0.0 - sum(p * math.log(p) for p in (p_plus, p_minus) if p > 0.0)


def entropy_closed_form(det: float) -> float:
    """Entropy written through the determinant alone (singular at det = 0)."""
    if not 0.0 < det <= 0.25:
        raise ValueError(f"closed form needs 0 < det <= 1/4, got {det}")
    root = math.sqrt(1.0 - 4.0 * det)
    # S = -ln(det)/2 - (r/2) ln((1+r)/(1-r)) with r = sqrt(1 - 4 det); the
    # identity 1 - r = 4 det / (1 + r) removes the cancellation at small det.
    one_minus_r = 4.0 * det / (1.0 + root)
    return -0.5 * math.log(det) * one_minus_r + root * (math.log(2.0) - math.log1p(root))


def spin_components(rho: ReducedDensityMatrix) -> tuple[float, float, float]:
    """``(X, Y, Z)`` with ``Y = i (rho10 - rho01) = -2 Im rho10``."""
    x = 2.0 * rho.rho10.real
    y = -2.0 * rho.rho10.imag
    z = rho.rho11 - rho.rho00
    return x, y, z
