"""Bit-encoded spin-1/2 basis and matrix-free Pauli action on state vectors.

Basis index ``j`` stores the z-state of spin ``i`` in bit ``i``; a set bit is
spin up (sigma_z = +1), a cleared bit is spin down. Site 0 is the central
spin, sites ``1..n_s`` the bath.

State vectors are plain complex numpy arrays of length ``2**N``. Every
operation here also accepts a stack of states shaped ``(2**N, B)``, one state
per column.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np
from scipy import sparse


class PauliAxis(enum.Enum):
    X = "X"
    Y = "Y"
    Z = "Z"

    @classmethod
    def parse(cls, value: "PauliAxis | str") -> "PauliAxis":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


def n_spins_of(psi: np.ndarray) -> int:
    """Number of spins encoded by the leading dimension of ``psi``."""
    dim = psi.shape[0]
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"state dimension {dim} is not a power of two")
    return dim.bit_length() - 1


def compose_index(bits: Sequence[int]) -> int:
    """Integer index for spin states ``bits[i]`` on site ``i``."""
    value = 0
    for i, b in enumerate(bits):
        if b not in (0, 1):
            raise ValueError(f"bit {i} must be 0 or 1, got {b}")
        value |= b << i
    return value


def extract_bits(index: int, n_spins: int) -> tuple[int, ...]:
    if not 0 <= index < 1 << n_spins:
        raise ValueError(f"index {index} outside [0, 2**{n_spins})")
    return tuple((index >> i) & 1 for i in range(n_spins))


def basis_state(index: int, n_spins: int) -> np.ndarray:
    psi = np.zeros(1 << n_spins, dtype=complex)
    psi[index] = 1.0
    return psi


def random_state(n_spins: int, rng: np.random.Generator, batch: int | None = None) -> np.ndarray:
    """Normalized random state (or ``batch`` columns of them)."""
    shape = (1 << n_spins,) if batch is None else (1 << n_spins, batch)
    psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return psi / np.linalg.norm(psi, axis=0)


def _split_site(psi: np.ndarray, site: int) -> np.ndarray:
    # View with axis 1 running over the bit of `site`.
    n = n_spins_of(psi)
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for {n} spins")
    lo = 1 << site
    hi = psi.shape[0] // (2 * lo)
    return psi.reshape((hi, 2, lo) + psi.shape[1:])


def apply_pauli(axis: PauliAxis | str, site: int, psi: np.ndarray) -> np.ndarray:
    """Return ``sigma_axis^(site) |psi>`` as a new array.

    X swaps the amplitude pairs that differ in bit ``site``. Z flips the sign
    of the spin-down half. Y follows the standard Pauli matrix in the
    (up, down) ordering: ``Y|up> = i|down>`` and ``Y|down> = -i|up>``, so
    that ``XY = iZ`` holds on every site.
    """
    axis = PauliAxis.parse(axis)
    psi = np.asarray(psi)
    src = _split_site(psi, site)
    out = np.empty(src.shape, dtype=np.result_type(psi.dtype, np.complex128))
    if axis is PauliAxis.X:
        out[:, 0] = src[:, 1]
        out[:, 1] = src[:, 0]
    elif axis is PauliAxis.Z:
        out[:, 0] = -src[:, 0]
        out[:, 1] = src[:, 1]
    else:
        out[:, 0] = 1j * src[:, 1]
        out[:, 1] = -1j * src[:, 0]
    return out.reshape(psi.shape)


def apply_pauli_accumulate(
    axis: PauliAxis | str, site: int, coeff: complex, psi: np.ndarray, acc: np.ndarray
) -> None:
    """In place: ``acc += coeff * sigma_axis^(site) |psi>``."""
    if psi.shape != acc.shape:
        raise ValueError(f"shape mismatch: psi {psi.shape} vs acc {acc.shape}")
    if coeff == 0:
        return
    axis = PauliAxis.parse(axis)
    src = _split_site(np.asarray(psi), site)
    dst = _split_site(acc, site)
    if axis is PauliAxis.X:
        dst[:, 0] += coeff * src[:, 1]
        dst[:, 1] += coeff * src[:, 0]
    elif axis is PauliAxis.Z:
        dst[:, 0] -= coeff * src[:, 0]
        dst[:, 1] += coeff * src[:, 1]
    else:
        dst[:, 0] += (1j * coeff) * src[:, 1]
        dst[:, 1] -= (1j * coeff) * src[:, 0]


def inner_product(phi: np.ndarray, psi: np.ndarray) -> complex:
    """``<phi|psi>``, conjugating the first argument."""
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    if phi.shape != psi.shape:
        raise ValueError(f"shape mismatch: {phi.shape} vs {psi.shape}")
    return complex(np.vdot(phi, psi))


def norm(psi: np.ndarray) -> float:
    return float(np.sqrt(inner_product(psi, psi).real))


# Single-spin matrices in the index basis (index 0 = down, index 1 = up).
# Used only to build dense reference operators.
PAULI_MATRICES = {
    PauliAxis.X: np.array([[0, 1], [1, 0]], dtype=complex),
    PauliAxis.Y: np.array([[0, 1j], [-1j, 0]], dtype=complex),
    PauliAxis.Z: np.array([[-1, 0], [0, 1]], dtype=complex),
}


def pauli_string_matrix(factors, n_spins: int):
    """Sparse ``2**N x 2**N`` matrix of a Pauli string via Kronecker products.

    ``factors`` is a sequence of ``(site, axis)`` pairs on distinct sites.
    """
    ops = {}
    for site, axis in factors:
        if not 0 <= site < n_spins:
            raise ValueError(f"site {site} out of range for {n_spins} spins")
        ops[site] = PAULI_MATRICES[PauliAxis.parse(axis)]
    mat = sparse.identity(1, dtype=complex, format="csr")
    # Highest site is the most significant bit, hence leftmost factor.
    for s in reversed(range(n_spins)):
        mat = sparse.kron(mat, ops.get(s, np.eye(2)), format="csr")
    return mat


def dense_pauli(axis: PauliAxis | str, site: int, n_spins: int) -> np.ndarray:
    """Dense matrix of a single-site Pauli."""
    return pauli_string_matrix([(site, axis)], n_spins).toarray()
