"""Time evolution ``i d|psi>/dt = H|psi>`` (hbar = 1).

``evolve_rk8`` is an adaptive explicit Runge-Kutta integrator of order 8 with
the embedded 5th/3rd-order error estimate of Dormand & Prince (DOP853).
Steps are shortened to land exactly on every output time. The integrator runs
in a frame shifted by a constant energy ``E_ref`` (default: the mean initial
energy) and multiplies the phase ``exp(-i E_ref t)`` back before states are
handed out, so the observer always sees the lab-frame state.

``evolve_exact_oracle`` diagonalizes small Hamiltonians densely and is the
reference for everything above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np
from scipy.integrate._ivp import dop853_coefficients as dop

from .eigensolver import DENSE_MAX_DIM, dense_spectrum_oracle
from .fastop import CompiledHamiltonian
from .hilbert import n_spins_of
from .model import PauliTermList

Observer = Callable[[float, np.ndarray], None]

# Butcher tableau of the 12-stage 8th-order method.
_N_STAGES = dop.N_STAGES
_A = dop.A[:_N_STAGES, :_N_STAGES]
_B = dop.B
_C = dop.C[:_N_STAGES]
_E3 = dop.E3
_E5 = dop.E5

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
H_MIN = 1e-14
# Proportional-integral step control damps accept/reject cycling when the
# step is limited by stability rather than accuracy.
PI_BETA = 0.04
_EXPO = 1.0 / 8 - 0.75 * PI_BETA


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    h_init: Optional[float] = None
    h_max: float = math.inf
    t_grid: tuple[float, ...] = ()
    adaptive: bool = True
    drift_flag: float = 1e-6

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        grid = np.asarray(self.t_grid, dtype=float)
        if grid.size == 0 or grid[0] != 0.0:
            raise ValueError("t_grid must be non-empty and start at 0")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("t_grid must be strictly ascending")
        if not self.adaptive and not self.h_init:
            raise ValueError("fixed-step mode needs h_init")

    @classmethod
    def uniform(cls, t_max: float, dt_out: float, **kw) -> "IntegratorConfig":
        n = int(round(t_max / dt_out))
        if n < 1 or abs(n * dt_out - t_max) > 1e-9 * max(t_max, 1.0):
            raise ValueError(f"dt_out={dt_out} does not divide t_max={t_max}")
        return cls(t_grid=tuple(k * dt_out for k in range(n + 1)), **kw)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: Optional[np.ndarray] = None  # (n_times, dim[, B]) when stored
    max_norm_drift: float = 0.0
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    energy_shift: float = 0.0
    flagged: bool = False
    norm_drift: np.ndarray = field(default_factory=lambda: np.zeros(0))


def make_initial_state(m_vector: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """``|1>_0 (x) |m>``: bath state(s) placed in the impurity-up half.

    Accepts one bath vector or a ``(2**n_s, B)`` stack of them.
    """
    m_vector = np.asarray(m_vector, dtype=complex)
    n_spins_of(m_vector)
    norms = np.linalg.norm(m_vector, axis=0)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError(f"bath vector not normalized (norm {norms})")
    out = np.zeros((2 * m_vector.shape[0],) + m_vector.shape[1:], dtype=complex)
    # Full index = 2*bath_index + impurity_bit.
    out[1::2] = m_vector
    return out


# Nonzero tableau entries only: the stage combinations are memory bound.
_A_IDX = [np.nonzero(_A[s, :s])[0] for s in range(_N_STAGES)]
_B_IDX = np.nonzero(_B)[0]
assert set(np.nonzero(_E5)[0]) | set(np.nonzero(_E3)[0]) <= set(_B_IDX)


@numba.njit(cache=True)
def _stage_input(y, K, idx, coeffs, out):
    # out = y + sum_k coeffs[k] * K[idx[k]]; y, out flat complex, K (stages, n).
    n_terms = idx.shape[0]
    for i in range(y.shape[0]):
        acc = y[i]
        for k in range(n_terms):
            acc += coeffs[k] * K[idx[k], i]
        out[i] = acc


@numba.njit(cache=True)
def _final_stage(y, K, idx, b, e5, e3, rtol, atol, out):
    # out = y + sum b K, fused with the scaled squared norms of the 5th- and
    # 3rd-order error estimates (which read the same K rows).
    s5 = 0.0
    s3 = 0.0
    n_terms = idx.shape[0]
    for i in range(y.shape[0]):
        acc = y[i]
        a5 = 0j
        a3 = 0j
        for k in range(n_terms):
            v = K[idx[k], i]
            acc += b[k] * v
            a5 += e5[k] * v
            a3 += e3[k] * v
        out[i] = acc
        m = max(y[i].real * y[i].real + y[i].imag * y[i].imag, acc.real * acc.real + acc.imag * acc.imag)
        scale = atol + rtol * math.sqrt(m)
        inv = 1.0 / (scale * scale)
        s5 += (a5.real * a5.real + a5.imag * a5.imag) * inv
        s3 += (a3.real * a3.real + a3.imag * a3.imag) * inv
    return s5, s3


def _error_norm(s5, s3, h, n):
    if s5 == 0.0 and s3 == 0.0:
        return 0.0
    return abs(h) * s5 / math.sqrt((s5 + 0.01 * s3) * n)


def _initial_step(rhs, y, f0, rtol, atol):
    # Hairer, Norsett & Wanner, "Solving ODEs I", sec. II.4.
    scale = atol + np.abs(y) * rtol
    d0 = np.sqrt(np.mean(np.abs(y / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + h0 * f0
    f1 = rhs(y1)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8)
    return min(100 * h0, h1)


def evolve_rk8(
    h: PauliTermList | CompiledHamiltonian,
    psi0: np.ndarray,
    cfg: IntegratorConfig,
    observer: Optional[Observer] = None,
    store_states: bool = False,
    energy_shift: Optional[float] = None,
) -> TrajectoryRecord:
    """Integrate from ``t = 0`` and call ``observer(t, psi)`` at every grid time.

    ``psi0`` is one state or a ``(dim, B)`` stack of independent states that
    share step sizes. ``psi`` passed to the observer is read-only and only
    valid during the call.
    """
    op = h if isinstance(h, CompiledHamiltonian) else CompiledHamiltonian(h)
    y = np.array(psi0, dtype=complex, order="C")
    if n_spins_of(y) != op.n_spins:
        raise ValueError("initial state does not match the Hamiltonian")
    norm0 = np.linalg.norm(y, axis=0)
    if np.any(np.abs(norm0 - 1.0) > 1e-10):
        raise ValueError(f"initial state not normalized (norm {norm0})")

    if energy_shift is None:
        hy = op.apply(y)
        energy_shift = float(np.mean(np.real(np.sum(y.conj() * hy, axis=0))))
    if op.shift != energy_shift:
        op = op.with_shift(energy_shift)

    grid = np.asarray(cfg.t_grid, dtype=float)
    n_out = grid.size
    states = np.empty((n_out,) + y.shape, dtype=complex) if store_states else None
    drift = np.zeros(n_out)
    lab = np.empty_like(y)

    def emit(k: int, t: float):
        np.multiply(y, np.exp(-1j * energy_shift * t), out=lab)
        drift[k] = float(np.max(np.abs(np.linalg.norm(lab, axis=0) - 1.0)))
        if states is not None:
            states[k] = lab
        if observer is not None:
            lab.flags.writeable = False
            try:
                observer(t, lab)
            finally:
                lab.flags.writeable = True

    rhs_calls = 0

    def rhs(v, out=None):
        nonlocal rhs_calls
        rhs_calls += 1
        return op.schrodinger_rhs(v, out)

    K = np.empty((_N_STAGES,) + y.shape, dtype=complex)
    Kf = K.reshape(_N_STAGES, -1)
    y_stage = np.empty_like(y)
    y_new = np.empty_like(y)
    rhs(y, K[0])

    emit(0, 0.0)
    t = 0.0
    if cfg.adaptive:
        h_step = cfg.h_init or _initial_step(rhs, y, K[0].copy(), cfg.rtol, cfg.atol)
    else:
        h_step = cfg.h_init
    h_step = min(h_step, cfg.h_max)
    n_steps = n_rejected = 0
    err_old = 1e-4

    for k in range(1, n_out):
        t_target = grid[k]
        while t < t_target:
            remaining = t_target - t
            landing = h_step >= remaining * (1 - 1e-12)
            if landing:
                h_try = remaining
            elif 2 * h_step > remaining:
                # Split the last stretch evenly rather than leave a sliver.
                h_try = 0.5 * remaining
            else:
                h_try = h_step
            if h_try < H_MIN:
                raise IntegrationError(f"step size underflow (h={h_try:.3e}) at t={t:.6g}")
            yf = y.reshape(-1)
            for s in range(1, _N_STAGES):
                idx = _A_IDX[s]
                _stage_input(yf, Kf, idx, h_try * _A[s, idx], y_stage.reshape(-1))
                rhs(y_stage, K[s])
            s5, s3 = _final_stage(
                yf, Kf, _B_IDX, h_try * _B[_B_IDX], _E5[_B_IDX], _E3[_B_IDX], cfg.rtol, cfg.atol, y_new.reshape(-1)
            )

            if cfg.adaptive:
                err = _error_norm(s5, s3, h_try, yf.size)
                if err > 1.0:
                    n_rejected += 1
                    h_step = h_try * max(MIN_FACTOR, SAFETY * err ** (-_EXPO))
                    continue
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * err ** (-_EXPO) * err_old ** PI_BETA
                    factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
                err_old = max(err, 1e-4)
                h_next = min(h_try * factor, cfg.h_max)
                # A step shortened to land on the grid does not shrink the next one.
                h_step = max(h_next, h_step) if landing else h_next
            t = t_target if landing else t + h_try
            y, y_new = y_new, y
            # First stage of the next step (FSAL), skipped for rejected steps.
            rhs(y, K[0])
            n_steps += 1
        emit(k, t_target)

    max_drift = float(drift.max())
    return TrajectoryRecord(
        times=grid.copy(),
        states=states,
        max_norm_drift=max_drift,
        n_steps=n_steps,
        n_rejected=n_rejected,
        n_rhs=rhs_calls,
        energy_shift=energy_shift,
        flagged=max_drift > cfg.drift_flag,
        norm_drift=drift,
    )


def evolve_exact_oracle(h: PauliTermList, psi0: np.ndarray, times) -> np.ndarray:
    """``V exp(-iEt) V^dagger psi0`` for every t; shape ``(len(times),) + psi0.shape``."""
    if h.dim > DENSE_MAX_DIM:
        raise ValueError(f"exact propagator refused: dim {h.dim} > {DENSE_MAX_DIM}")
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape[0] != h.dim:
        raise ValueError("initial state does not match the Hamiltonian")
    e, v = dense_spectrum_oracle(h)
    coeffs = v.conj().T @ psi0
    out = []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        phase = np.exp(-1j * e * t)
        c = phase[:, None] * coeffs if coeffs.ndim == 2 else phase * coeffs
        out.append(v @ c)
    return np.array(out)
