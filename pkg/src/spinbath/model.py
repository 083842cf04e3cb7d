"""Central spin coupled to an interacting spin bath.

The Hamiltonian (hbar = 1) is

    H = (w0/2) Z_0 + beta X_0 + lambda0 X_0 Sx
        + sum_j [(w_j/2) Z_j + beta X_j] + lambda sum_{i<j} X_i X_j

with ``Sx = sum_j X_j`` over the bath sites ``1..n_s``. It is available both as
an explicit list of Pauli strings and in the collective ("super-spin") form
built from ``Sx`` and ``Sz``; the two must agree operator for operator.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .hilbert import PauliAxis, apply_pauli, apply_pauli_accumulate, n_spins_of, pauli_string_matrix

PAPER_PRESET = dict(n_s=12, omega0=0.8288, beta=0.01, lambda0=1.0, omega_d=1.0)


# ---------------------------------------------------------------------------
# Frequencies
# ---------------------------------------------------------------------------


def sample_debye_frequencies(
    n_s: int,
    omega_d: float = 1.0,
    mode: str = "quantile",
    seed: int | None = None,
    values: Sequence[float] | None = None,
) -> np.ndarray:
    """Bath frequencies drawn from the Debye density g(w) ~ w**2 on (0, omega_d].

    ``mode`` is ``"quantile"`` (deterministic midpoint quantiles of the CDF
    (w/omega_d)**3), ``"random"`` (inverse-CDF draws from ``seed``) or
    ``"explicit"`` (validate and sort ``values``). Output is sorted ascending.
    """
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    if omega_d <= 0:
        raise ValueError("omega_d must be positive")
    if mode == "quantile":
        u = (np.arange(1, n_s + 1) - 0.5) / n_s
        return omega_d * np.cbrt(u)
    if mode == "random":
        rng = np.random.default_rng(seed)
        u = rng.random(n_s)
        # u == 0 has probability ~1e-16 but would give a zero frequency.
        u = np.where(u == 0.0, np.finfo(float).tiny, u)
        return np.sort(omega_d * np.cbrt(u))
    if mode == "explicit":
        if values is None:
            raise ValueError("explicit mode needs a list of frequencies")
        w = np.asarray(values, dtype=float).ravel()
        if w.size != n_s:
            raise ValueError(f"expected {n_s} frequencies, got {w.size}")
        bad = (w <= 0) | (w > omega_d) | ~np.isfinite(w)
        if bad.any():
            raise ValueError(f"frequencies outside (0, {omega_d}]: {w[bad].tolist()}")
        return np.sort(w)
    raise ValueError(f"unknown frequency mode {mode!r}")


def read_frequency_file(path: str | os.PathLike) -> list[float]:
    """One decimal value per line; blank lines and ``#`` comments are ignored."""
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                values.append(float(line))
    return values


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    n_s: int = 12
    omega0: float = 0.8288
    beta: float = 0.01
    lambda0: float = 1.0
    lam: float = 0.0
    omega_d: float = 1.0
    frequencies: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.omega_d <= 0:
            raise ValueError("omega_d must be positive")
        freqs = self.frequencies
        if len(freqs) == 0:
            freqs = sample_debye_frequencies(self.n_s, self.omega_d)
        freqs = sample_debye_frequencies(self.n_s, self.omega_d, "explicit", values=freqs)
        object.__setattr__(self, "frequencies", tuple(float(w) for w in freqs))

    @classmethod
    def paper(cls, lam: float = 0.0, **overrides) -> "ModelParams":
        kw = dict(PAPER_PRESET, lam=lam)
        kw.update(overrides)
        return cls(**kw)

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    @property
    def omega(self) -> np.ndarray:
        return np.asarray(self.frequencies)


# ---------------------------------------------------------------------------
# Pauli term lists
# ---------------------------------------------------------------------------

Factor = tuple[int, PauliAxis]


@dataclass(frozen=True)
class PauliTerm:
    coeff: float
    factors: tuple[Factor, ...]

    @property
    def axes(self) -> set[PauliAxis]:
        return {a for _, a in self.factors}


@dataclass(frozen=True)
class PauliTermList:
    """Real-weighted sum of one- and two-site Pauli strings.

    Terms acting on the same factor set are merged; zero terms are dropped.
    """

    n_spins: int
    terms: tuple[PauliTerm, ...] = field(default=())

    @classmethod
    def build(cls, n_spins: int, terms: Iterable[tuple[complex, Sequence[tuple[int, PauliAxis | str]]]]):
        merged: dict[tuple[Factor, ...], float] = {}
        for coeff, factors in terms:
            if np.iscomplexobj(coeff) and np.imag(coeff) != 0:
                raise ValueError(f"complex coefficient {coeff} rejected")
            coeff = float(np.real(coeff))
            key = tuple(sorted(((int(s), PauliAxis.parse(a)) for s, a in factors), key=lambda f: f[0]))
            if not 1 <= len(key) <= 2:
                raise ValueError("terms must have one or two factors")
            sites = [s for s, _ in key]
            if len(set(sites)) != len(sites):
                raise ValueError(f"repeated site in term {key}")
            if any(not 0 <= s < n_spins for s in sites):
                raise ValueError(f"site out of range in term {key}")
            merged[key] = merged.get(key, 0.0) + coeff
        out = tuple(PauliTerm(c, k) for k, c in merged.items() if c != 0.0)
        return cls(n_spins, out)

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def dim(self) -> int:
        return 1 << self.n_spins

    def scaled(self, factor: float) -> "PauliTermList":
        return PauliTermList(self.n_spins, tuple(PauliTerm(t.coeff * factor, t.factors) for t in self.terms))

    def norm_bound(self) -> float:
        """Upper bound on the operator norm: sum of |coefficients|."""
        return float(sum(abs(t.coeff) for t in self.terms))

    def to_dense(self, max_dim: int = 4096) -> np.ndarray:
        """Dense matrix assembled from Kronecker products of 2x2 Paulis."""
        if self.dim > max_dim:
            raise ValueError(f"dense assembly refused: dim {self.dim} > {max_dim}")
        mat = sparse.csr_matrix((self.dim, self.dim), dtype=complex)
        for term in self.terms:
            mat = mat + term.coeff * pauli_string_matrix(term.factors, self.n_spins)
        return mat.toarray()


def build_full_hamiltonian(p: ModelParams) -> PauliTermList:
    """Central spin (site 0) plus bath (sites 1..n_s)."""
    X, Z = PauliAxis.X, PauliAxis.Z
    w = p.omega
    terms = [(p.omega0 / 2, [(0, Z)]), (p.beta, [(0, X)])]
    terms += [(p.lambda0, [(0, X), (j, X)]) for j in range(1, p.n_s + 1)]
    for j in range(1, p.n_s + 1):
        terms.append((w[j - 1] / 2, [(j, Z)]))
        terms.append((p.beta, [(j, X)]))
    # lambda/2 over ordered pairs i != j == lambda over unordered pairs.
    for i in range(1, p.n_s + 1):
        for j in range(i + 1, p.n_s + 1):
            terms.append((p.lam, [(i, X), (j, X)]))
    return PauliTermList.build(p.n_s + 1, terms)


def build_bath_hamiltonian(p: ModelParams) -> PauliTermList:
    """Isolated bath, sites relabelled ``0..n_s-1``."""
    X, Z = PauliAxis.X, PauliAxis.Z
    w = p.omega
    terms = []
    for j in range(p.n_s):
        terms.append((w[j] / 2, [(j, Z)]))
        terms.append((p.beta, [(j, X)]))
    for i in range(p.n_s):
        for j in range(i + 1, p.n_s):
            terms.append((p.lam, [(i, X), (j, X)]))
    return PauliTermList.build(p.n_s, terms)


def build_isolated_spin_hamiltonian(p: ModelParams) -> PauliTermList:
    """Central spin alone (lambda0 = 0 with the bath traced out): (w0/2) Z + beta X."""
    return PauliTermList.build(1, [(p.omega0 / 2, [(0, "Z")]), (p.beta, [(0, "X")])])


def apply_hamiltonian(h: PauliTermList, psi: np.ndarray) -> np.ndarray:
    """``H|psi>`` by accumulating every Pauli string term by term.

    This is the reference path. Two-site strings are applied as one Pauli
    into a scratch vector followed by an accumulated second Pauli.
    """
    psi = np.asarray(psi)
    if n_spins_of(psi) != h.n_spins:
        raise ValueError(f"state has {n_spins_of(psi)} spins, Hamiltonian {h.n_spins}")
    acc = np.zeros(psi.shape, dtype=complex)
    for term in h.terms:
        if len(term.factors) == 1:
            (site, axis), = term.factors
            apply_pauli_accumulate(axis, site, term.coeff, psi, acc)
        else:
            (s1, a1), (s2, a2) = term.factors
            apply_pauli_accumulate(a1, s1, term.coeff, apply_pauli(a2, s2, psi), acc)
    return acc


# ---------------------------------------------------------------------------
# Collective (super-spin) form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuperSpinForm:
    params: ModelParams
    Omega: float
    nu: tuple[float, ...]

    @classmethod
    def from_params(cls, p: ModelParams) -> "SuperSpinForm":
        w = p.omega
        Omega = float(w.mean())
        return cls(p, Omega, tuple(float(x) for x in w - Omega))


def _bath_sum(axis: PauliAxis, psi: np.ndarray, n_s: int) -> np.ndarray:
    out = np.zeros(psi.shape, dtype=complex)
    for j in range(1, n_s + 1):
        apply_pauli_accumulate(axis, j, 1.0, psi, out)
    return out


def apply_superspin_hamiltonian(s: SuperSpinForm, psi: np.ndarray) -> np.ndarray:
    """``H|psi>`` evaluated through the collective bath operators Sx, Sz."""
    p = s.params
    psi = np.asarray(psi)
    if n_spins_of(psi) != p.n_s + 1:
        raise ValueError(f"state has {n_spins_of(psi)} spins, expected {p.n_s + 1}")
    X, Z = PauliAxis.X, PauliAxis.Z
    out = np.zeros(psi.shape, dtype=complex)
    apply_pauli_accumulate(Z, 0, p.omega0 / 2, psi, out)
    apply_pauli_accumulate(X, 0, p.beta, psi, out)

    sx = _bath_sum(X, psi, p.n_s)
    apply_pauli_accumulate(X, 0, p.lambda0, sx, out)
    for j, nu in enumerate(s.nu, start=1):
        apply_pauli_accumulate(Z, j, nu / 2, psi, out)
    out += (s.Omega / 2) * _bath_sum(Z, psi, p.n_s)
    out += p.beta * sx
    if p.lam != 0:
        out += (p.lam / 2) * (_bath_sum(X, sx, p.n_s) - p.n_s * psi)
    return out


def effective_hamiltonian_spin(p: ModelParams, s_x: float) -> np.ndarray:
    """Strong-coupling effective 2x2 Hamiltonian in the (up, down) ordering."""
    off = p.beta + p.lambda0 * s_x
    return np.array([[p.omega0 / 2, off], [off, -p.omega0 / 2]], dtype=float)
