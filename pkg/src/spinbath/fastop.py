"""Compiled matvec for Hamiltonians made of pure Z-strings and pure X-strings.

Every Z-string is diagonal in the computational basis. Every X-string is a bit
flip ``j -> j ^ mask``, and with the unnormalized Walsh-Hadamard transform
``F[k, j] = (-1)**popcount(k & j)`` one has ``F X_i = D_i F`` with
``D_i[k] = 1 - 2*bit_i(k)``. Hence

    H psi = Dz * psi + F (Dx * F psi) / dim

which costs two in-place transforms instead of one pass per term. Term lists
with any other kind of string fall back to the term-by-term reference path.
"""

from __future__ import annotations

import numba
import numpy as np

from .hilbert import PauliAxis, n_spins_of
from .model import PauliTermList, apply_hamiltonian


@numba.njit(cache=True)
def _fwht_inplace(a):
    # a: float64 (dim, width); transforms along axis 0, columns independent.
    dim, width = a.shape
    h = 1
    while h * 4 <= dim:
        for i in range(0, dim, 4 * h):
            for j in range(i, i + h):
                for b in range(width):
                    x0 = a[j, b]
                    x1 = a[j + h, b]
                    x2 = a[j + 2 * h, b]
                    x3 = a[j + 3 * h, b]
                    s0 = x0 + x1
                    d0 = x0 - x1
                    s1 = x2 + x3
                    d1 = x2 - x3
                    a[j, b] = s0 + s1
                    a[j + h, b] = d0 + d1
                    a[j + 2 * h, b] = s0 - s1
                    a[j + 3 * h, b] = d0 - d1
        h *= 4
    if h < dim:
        for i in range(0, dim, 2 * h):
            for j in range(i, i + h):
                for b in range(width):
                    x = a[j, b]
                    y = a[j + h, b]
                    a[j, b] = x + y
                    a[j + h, b] = x - y


@numba.njit(cache=True)
def _apply_kernel(zd, xd, psi_r, tmp_r, psi, out, tmp, has_x, times_minus_i):
    # psi_r, tmp_r: float64 views (dim, 2*B) of the complex (dim, B) arrays.
    # Slice assignment is slow in numba; explicit loops throughout.
    dim, width = psi_r.shape
    n_col = psi.shape[1]
    if has_x:
        for j in range(dim):
            for b in range(width):
                tmp_r[j, b] = psi_r[j, b]
        _fwht_inplace(tmp_r)
        inv = 1.0 / dim
        for j in range(dim):
            s = xd[j] * inv
            for b in range(width):
                tmp_r[j, b] *= s
        _fwht_inplace(tmp_r)
    else:
        for j in range(dim):
            for b in range(width):
                tmp_r[j, b] = 0.0
    if times_minus_i:
        for j in range(dim):
            z = -1j * zd[j]
            for b in range(n_col):
                out[j, b] = z * psi[j, b] - 1j * tmp[j, b]
    else:
        for j in range(dim):
            z = zd[j]
            for b in range(n_col):
                out[j, b] = z * psi[j, b] + tmp[j, b]


def _string_signs(sites, dim: int, flip: bool) -> np.ndarray:
    idx = np.arange(dim)
    sign = np.ones(dim)
    for s in sites:
        bit = (idx >> s) & 1
        sign *= (1 - 2 * bit) if flip else (2 * bit - 1)
    return sign


class CompiledHamiltonian:
    """Fast ``H - shift`` matvec over single states or column batches.

    ``shift`` is a real constant removed from the diagonal; it only changes the
    global phase of evolved states and keeps the integrator's phase error small.
    """

    def __init__(self, h: PauliTermList, shift: float = 0.0):
        self.terms = h
        self.n_spins = h.n_spins
        self.dim = h.dim
        self.shift = float(shift)
        z_diag = np.full(self.dim, -self.shift)
        x_diag = np.zeros(self.dim)
        self.fast = True
        for t in h.terms:
            axes = t.axes
            sites = [s for s, _ in t.factors]
            if axes == {PauliAxis.Z}:
                z_diag += t.coeff * _string_signs(sites, self.dim, flip=False)
            elif axes == {PauliAxis.X}:
                x_diag += t.coeff * _string_signs(sites, self.dim, flip=True)
            else:
                self.fast = False
        self.z_diag = z_diag
        self.x_diag = x_diag
        self.has_x = bool(np.any(x_diag))
        self._scratch: dict[tuple, np.ndarray] = {}

    def with_shift(self, shift: float) -> "CompiledHamiltonian":
        return CompiledHamiltonian(self.terms, shift)

    def _tmp(self, shape) -> np.ndarray:
        buf = self._scratch.get(shape)
        if buf is None:
            buf = self._scratch[shape] = np.empty(shape, dtype=complex)
        return buf

    def _run(self, psi: np.ndarray, out: np.ndarray | None, minus_i: bool) -> np.ndarray:
        psi = np.ascontiguousarray(psi, dtype=complex)
        if n_spins_of(psi) != self.n_spins:
            raise ValueError(f"state has {n_spins_of(psi)} spins, operator {self.n_spins}")
        if out is None:
            out = np.empty_like(psi)
        elif out.shape != psi.shape or not out.flags.c_contiguous or out.dtype != complex:
            raise ValueError("out must be a C-contiguous complex array shaped like psi")
        if not self.fast:
            res = apply_hamiltonian(self.terms, psi) - self.shift * psi
            out[...] = -1j * res if minus_i else res
            return out
        shape2 = (self.dim, psi.size // self.dim)
        tmp = self._tmp(shape2)
        psi2 = psi.reshape(shape2)
        _apply_kernel(
            self.z_diag,
            self.x_diag,
            psi2.view(np.float64),
            tmp.view(np.float64),
            psi2,
            out.reshape(shape2),
            tmp,
            self.has_x,
            minus_i,
        )
        return out

    def apply(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """``(H - shift) psi``."""
        return self._run(psi, out, False)

    def schrodinger_rhs(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """``-i (H - shift) psi``."""
        return self._run(psi, out, True)

    __call__ = apply
