"""Lowest eigenpairs of a Pauli-string Hamiltonian by restarted Lanczos.

The Krylov basis is fully reorthogonalized (classical Gram-Schmidt, applied
twice) and the projected problem is solved by explicit Rayleigh-Ritz on the
stored basis and its images. A restart keeps the best Ritz vectors plus the
next Krylov direction (thick restart), so the lowest Ritz value never
increases from one cycle to the next.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .fastop import CompiledHamiltonian
from .model import PauliTermList

SPECTRUM_MAGIC = b"SPINBATH-SPECTRUM v1\n"
DENSE_MAX_DIM = 4096


class LanczosConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class LanczosConfig:
    n_eig: int = 20
    max_krylov: int = 120
    tol: float = 1e-11
    reorth: bool = True
    seed: int = 1234
    max_restarts: int = 200
    degeneracy_gap: float = 1e-10

    def __post_init__(self):
        if self.n_eig < 1:
            raise ValueError("n_eig must be >= 1")
        if self.max_krylov < self.n_eig:
            raise ValueError("max_krylov must be >= n_eig")
        if not self.reorth:
            raise ValueError("full reorthogonalization cannot be disabled")


@dataclass
class BathSpectrum:
    energies: np.ndarray
    eigenvectors: np.ndarray  # (dim, n) columns
    residuals: np.ndarray
    n_requested: int = 0
    width: float = 1.0
    history: list[float] = field(default_factory=list)
    restarts: int = 0
    matvecs: int = 0

    @property
    def n_eig(self) -> int:
        return len(self.energies)

    @property
    def extended(self) -> int:
        """How many pairs were added to complete a degenerate multiplet."""
        return self.n_eig - self.n_requested if self.n_requested else 0


def fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive."""
    vectors = np.array(vectors, dtype=complex, copy=True)
    cols = vectors if vectors.ndim == 2 else vectors[:, None]
    for k in range(cols.shape[1]):
        i = int(np.argmax(np.abs(cols[:, k])))
        cols[:, k] *= np.conj(cols[i, k]) / abs(cols[i, k])
    return vectors


def _orthogonalize(w: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # basis rows are orthonormal; two passes of classical Gram-Schmidt.
    for _ in range(2):
        w = w - basis.T @ (basis.conj() @ w)
    return w


def lowest_eigenpairs(h: PauliTermList, cfg: LanczosConfig = LanczosConfig()) -> BathSpectrum:
    """Lowest ``cfg.n_eig`` eigenpairs of ``h``, extended to whole multiplets.

    Converged means ``||H v - e v|| <= tol * width`` for every returned pair,
    where ``width`` is the running estimate of the spectral range from the
    Ritz values. Raises ``LanczosConvergenceError`` otherwise.
    """
    op = CompiledHamiltonian(h)
    dim = h.dim
    if cfg.n_eig > dim:
        raise ValueError(f"n_eig={cfg.n_eig} exceeds the space dimension {dim}")
    m = min(cfg.max_krylov, dim)
    rng = np.random.default_rng(cfg.seed)

    def random_vector():
        return rng.normal(size=dim) + 1j * rng.normal(size=dim)

    basis = np.empty((m, dim), dtype=complex)
    images = np.empty((m, dim), dtype=complex)
    v = random_vector()
    basis[0] = v / np.linalg.norm(v)
    n_basis, n_img = 1, 0
    matvecs = 0
    width = 0.0
    n_target = cfg.n_eig
    history: list[float] = []
    scale = max(h.norm_bound(), 1.0)

    for restart in range(cfg.max_restarts + 1):
        while True:
            while n_img < n_basis:
                images[n_img] = op.apply(basis[n_img])
                n_img += 1
                matvecs += 1
            if n_basis == m:
                break
            w = _orthogonalize(images[n_basis - 1], basis[:n_basis])
            beta = np.linalg.norm(w)
            if beta <= 1e-12 * scale:
                # Invariant subspace: continue from a fresh random direction.
                w = _orthogonalize(random_vector(), basis[:n_basis])
                beta = np.linalg.norm(w)
            basis[n_basis] = w / beta
            n_basis += 1

        proj = basis[:m].conj() @ images[:m].T
        proj = 0.5 * (proj + proj.conj().T)
        theta, s = np.linalg.eigh(proj)
        width = max(width, float(theta[-1] - theta[0]), 1e-300)
        history.append(float(theta[0]))

        if m == dim:
            # The basis spans the whole space: Ritz pairs are exact.
            while n_target < dim and theta[n_target] - theta[n_target - 1] < cfg.degeneracy_gap:
                n_target += 1
            return _finish(op, s[:, :n_target].T @ basis[:m], theta[:n_target], cfg, width, history, restart, matvecs)

        converged = False
        while True:
            # One Ritz pair beyond the target measures the gap to the next level.
            n_check = min(n_target + 1, m - 1)
            ritz = s[:, :n_check].T @ basis[:m]
            ritz_img = s[:, :n_check].T @ images[:m]
            res = np.linalg.norm(ritz_img - theta[:n_check, None] * ritz, axis=1)
            tol = cfg.tol * width
            if not np.all(res <= tol):
                break
            if n_target < n_check and theta[n_target] - theta[n_target - 1] < cfg.degeneracy_gap:
                n_target += 1
                continue
            converged = n_target < n_check
            break
        if converged:
            return _finish(op, ritz[:n_target], theta[:n_target], cfg, width, history, restart, matvecs)

        if restart == cfg.max_restarts:
            break
        # Thick restart: best Ritz vectors + the next Krylov direction.
        keep = min(m - 1, max(n_check + 6, m // 2))
        nxt = _orthogonalize(images[m - 1], basis[:m])
        kept = s[:, :keep].T
        basis[:keep] = kept @ basis[:m]
        images[:keep] = kept @ images[:m]
        nxt = _orthogonalize(nxt, basis[:keep])
        beta = np.linalg.norm(nxt)
        if beta <= 1e-12 * scale:
            nxt = _orthogonalize(random_vector(), basis[:keep])
            beta = np.linalg.norm(nxt)
        basis[keep] = nxt / beta
        n_basis, n_img = keep + 1, keep

    raise LanczosConvergenceError(
        f"Lanczos did not converge {n_target} pairs in {cfg.max_restarts} restarts "
        f"(max residual {res.max():.3e}, tolerance {tol:.3e})",
        res,
    )


def _finish(op, rows, energies, cfg, width, history, restarts, matvecs) -> BathSpectrum:
    vecs = fix_phase(np.ascontiguousarray(rows.T))
    residuals = np.linalg.norm(op.apply(vecs) - vecs * energies, axis=0)
    return BathSpectrum(
        energies=np.array(energies, dtype=float),
        eigenvectors=vecs,
        residuals=residuals,
        n_requested=cfg.n_eig,
        width=width,
        history=history,
        restarts=restarts,
        matvecs=matvecs,
    )


def dense_spectrum_oracle(h: PauliTermList, max_dim: int = DENSE_MAX_DIM) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs from a dense Hermitian eigensolve (small systems only)."""
    if h.dim > max_dim:
        raise ValueError(f"dense oracle refused: dim {h.dim} > {max_dim}")
    mat = h.to_dense(max_dim)
    if np.allclose(mat.imag, 0.0):
        e, v = np.linalg.eigh(mat.real)
        return e, v.astype(complex)
    return np.linalg.eigh(mat)


@dataclass
class SpectrumReport:
    max_residual: float
    max_gram_deviation: float
    residuals: np.ndarray


def verify_spectrum(s: BathSpectrum, h: PauliTermList) -> SpectrumReport:
    """Recompute ``||H v - e v||`` and the Gram matrix deviation from identity."""
    vecs = s.eigenvectors
    if vecs.shape[0] != h.dim:
        raise ValueError("eigenvector dimension does not match the Hamiltonian")
    op = CompiledHamiltonian(h)
    res = np.linalg.norm(op.apply(np.ascontiguousarray(vecs)) - vecs * s.energies, axis=0)
    gram = vecs.conj().T @ vecs
    dev = float(np.abs(gram - np.eye(gram.shape[0])).max())
    return SpectrumReport(float(res.max()), dev, res)


# ---------------------------------------------------------------------------
# Binary cache: magic line, one JSON line, then little-endian doubles
# (energies, residuals, complex amplitudes column by column).
# ---------------------------------------------------------------------------


def save_spectrum(s: BathSpectrum, path: str | os.PathLike, meta: dict | None = None) -> None:
    dim, n = s.eigenvectors.shape
    header = dict(meta or {}, dim=dim, n_eig=n, n_requested=s.n_requested, width=s.width)
    with open(path, "wb") as fh:
        fh.write(SPECTRUM_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.asarray(s.energies, dtype="<f8").tobytes())
        fh.write(np.asarray(s.residuals, dtype="<f8").tobytes())
        fh.write(np.asarray(s.eigenvectors.T, dtype="<c16").tobytes())


def load_spectrum(path: str | os.PathLike) -> tuple[BathSpectrum, dict]:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != SPECTRUM_MAGIC:
            raise ValueError(f"{path}: not a spectrum file (header {magic[:40]!r})")
        header = json.loads(fh.readline())
        dim, n = header["dim"], header["n_eig"]
        energies = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
        residuals = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
        raw = fh.read(16 * n * dim)
        if len(raw) != 16 * n * dim:
            raise ValueError(f"{path}: truncated amplitude block")
        vecs = np.frombuffer(raw, dtype="<c16").reshape(n, dim).T.astype(complex)
    spec = BathSpectrum(energies, vecs, residuals, header.get("n_requested", n), header.get("width", 1.0))
    return spec, header


__all__ = [
    "BathSpectrum",
    "LanczosConfig",
    "LanczosConvergenceError",
    "SpectrumReport",
    "dense_spectrum_oracle",
    "fix_phase",
    "load_spectrum",
    "lowest_eigenpairs",
    "save_spectrum",
    "verify_spectrum",
]
