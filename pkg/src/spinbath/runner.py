"""End-to-end experiments: bath spectrum, thermal ensemble, lambda sweep.

For every coupling ``lambda`` in the sweep the isolated bath is diagonalized,
the ``n_eig`` states ``|1>_0 (x) |m>`` are evolved together under the full
Hamiltonian, and the Boltzmann-weighted reduced density matrix of the central
spin is reduced to ``t,S,X,Y,Z`` rows. An optional reference run evolves the
central spin alone.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .eigensolver import LanczosConfig, lowest_eigenpairs, save_spectrum, verify_spectrum
from .model import (
    ModelParams,
    build_bath_hamiltonian,
    build_full_hamiltonian,
    build_isolated_spin_hamiltonian,
    read_frequency_file,
    sample_debye_frequencies,
)
from .observables import (
    ReducedDensityMatrix,
    batch_partial_traces,
    boltzmann_weights,
    entropy,
    mix_batch,
    partial_trace_impurity,
    spin_components,
)
from .propagation import IntegratorConfig, evolve_rk8, make_initial_state

log = logging.getLogger(__name__)

CSV_HEADER = ["t", "S", "X", "Y", "Z"]
MANIFEST_FORMAT = "spinbath-manifest/1"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    n_s: int = 12
    omega0: float = 0.8288
    beta: float = 0.01
    lambda0: float = 1.0
    omega_d: float = 1.0
    lambdas: tuple[float, ...] = (0.0, 1.0, 2.0, 4.0, 8.0)
    n_eig: int = 20
    kT: float = 0.02
    t_max: float = 100.0
    dt_out: float = 0.1
    rtol: float = 1e-10
    atol: float = 1e-12
    freq_mode: str = "quantile"
    out_dir: str = "runs/paper"
    isolated_reference: bool = True
    threads: int = 1
    lanczos_seed: int = 1234
    lanczos_tol: float = 1e-11
    max_krylov: int = 120

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        self.validate()

    def validate(self) -> None:
        if not self.lambdas:
            raise ConfigError("lambda list is empty")
        if len(set(lambda_tag(v) for v in self.lambdas)) != len(self.lambdas):
            raise ConfigError(f"duplicate lambda values in {self.lambdas}")
        if self.n_s < 1:
            raise ConfigError("n_s must be >= 1")
        if not 1 <= self.n_eig <= 2**self.n_s:
            raise ConfigError(f"n_eig={self.n_eig} must lie in [1, 2**n_s]")
        if self.kT <= 0:
            raise ConfigError("kT must be positive")
        if self.t_max <= 0 or self.dt_out <= 0:
            raise ConfigError("t_max and dt_out must be positive")
        n = round(self.t_max / self.dt_out)
        if n < 1 or abs(n * self.dt_out - self.t_max) > 1e-9 * self.t_max:
            raise ConfigError(f"dt_out={self.dt_out} does not divide t_max={self.t_max}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        kind = self.freq_mode.split(":", 1)[0]
        if kind not in ("quantile", "random", "file", "explicit"):
            raise ConfigError(f"unknown frequency mode {self.freq_mode!r}")

    @classmethod
    def paper(cls, **overrides) -> "RunConfig":
        return cls(**overrides)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["lambdas"] = list(self.lambdas)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: (tuple(v) if k == "lambdas" else v) for k, v in d.items() if k in names})

    # -- derived -------------------------------------------------------------

    def frequencies(self) -> np.ndarray:
        kind, _, arg = self.freq_mode.partition(":")
        try:
            if kind == "quantile":
                return sample_debye_frequencies(self.n_s, self.omega_d, "quantile")
            if kind == "random":
                return sample_debye_frequencies(self.n_s, self.omega_d, "random", seed=int(arg or 0))
            if kind == "file":
                values = read_frequency_file(arg)
            else:
                values = [float(v) for v in arg.split(",") if v.strip()]
            return sample_debye_frequencies(self.n_s, self.omega_d, "explicit", values=values)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"frequency mode {self.freq_mode!r}: {exc}") from exc

    def model_params(self, lam: float, frequencies=None) -> ModelParams:
        freqs = self.frequencies() if frequencies is None else frequencies
        return ModelParams(
            n_s=self.n_s,
            omega0=self.omega0,
            beta=self.beta,
            lambda0=self.lambda0,
            lam=float(lam),
            omega_d=self.omega_d,
            frequencies=tuple(freqs),
        )

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig.uniform(self.t_max, self.dt_out, rtol=self.rtol, atol=self.atol)

    def lanczos(self) -> LanczosConfig:
        return LanczosConfig(
            n_eig=self.n_eig,
            max_krylov=min(max(self.max_krylov, self.n_eig + 10), 2**self.n_s),
            tol=self.lanczos_tol,
            seed=self.lanczos_seed,
        )


@dataclass
class RunManifest:
    config: dict[str, Any]
    frequencies: list[float]
    status: str = "incomplete"
    software: dict[str, str] = field(default_factory=dict)
    lambdas: dict[str, dict[str, Any]] = field(default_factory=dict)
    isolated: Optional[dict[str, Any]] = None
    summary: list[dict[str, float]] = field(default_factory=list)
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    timings: dict[str, float] = field(default_factory=dict)
    format: str = MANIFEST_FORMAT

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunManifest":
        with open(path) as fh:
            data = json.load(fh)
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def lambda_tag(value: float) -> str:
    return f"{float(value):g}"


def csv_name(value: float) -> str:
    return f"sweep_lambda_{lambda_tag(value)}.csv"


def _software() -> dict[str, str]:
    import numba
    import scipy

    return {
        "spinbath": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


# ---------------------------------------------------------------------------
# Per-lambda pipeline
# ---------------------------------------------------------------------------


def _observable_row(t: float, rho: ReducedDensityMatrix) -> tuple[float, ...]:
    x, y, z = spin_components(rho)
    # + 0.0 folds negative zeros so the text output is sign-clean.
    return tuple(v + 0.0 for v in (t, entropy(rho), x, y, z))


def run_lambda(cfg: RunConfig, lam: float, frequencies) -> dict[str, Any]:
    """Spectrum, ensemble and trajectories for one coupling; returns rows and diagnostics."""
    timings: dict[str, float] = {}
    stage = "bath_spectrum"
    try:
        t0 = time.perf_counter()
        params = cfg.model_params(lam, frequencies)
        bath = build_bath_hamiltonian(params)
        spectrum = lowest_eigenpairs(bath, cfg.lanczos())
        report = verify_spectrum(spectrum, bath)
        timings[stage] = time.perf_counter() - t0

        stage = "thermal_weights"
        ensemble = boltzmann_weights(spectrum, cfg.kT)

        stage = "propagation"
        t0 = time.perf_counter()
        h = build_full_hamiltonian(params)
        psi0 = make_initial_state(spectrum.eigenvectors)
        weights = ensemble.weights
        rows: list[tuple[float, ...]] = []

        def observer(t, psi):
            r11, r00, r10 = batch_partial_traces(psi)
            rows.append(_observable_row(t, mix_batch(r11, r00, r10, weights)))

        record = evolve_rk8(h, psi0, cfg.integrator(), observer=observer)
        timings[stage] = time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise StageError(f"{stage} (lambda={lambda_tag(lam)})", exc) from exc

    return {
        "lambda": float(lam),
        "rows": rows,
        "spectrum": spectrum,
        "info": {
            "csv": csv_name(lam),
            "spectrum_file": f"spectrum_lambda_{lambda_tag(lam)}.dat",
            "n_eig_requested": cfg.n_eig,
            "n_eig_effective": spectrum.n_eig,
            "n_eig_extension": spectrum.extended,
            "energies": spectrum.energies.tolist(),
            "weights": ensemble.weights.tolist(),
            "weight_truncation": ensemble.truncation,
            "lanczos": {
                "restarts": spectrum.restarts,
                "matvecs": spectrum.matvecs,
                "max_residual": report.max_residual,
                "max_gram_deviation": report.max_gram_deviation,
                "spectral_width": spectrum.width,
            },
            "integration": {
                "steps": record.n_steps,
                "rejected": record.n_rejected,
                "rhs_evaluations": record.n_rhs,
                "energy_shift": record.energy_shift,
                "max_norm_drift": record.max_norm_drift,
                "flagged": record.flagged,
            },
            "timings": timings,
        },
    }


def run_isolated_reference(cfg: RunConfig) -> dict[str, Any]:
    """Central spin alone, started in ``|1>``; a two-dimensional integration."""
    params = cfg.model_params(0.0)
    h = build_isolated_spin_hamiltonian(params)
    rows: list[tuple[float, ...]] = []

    def observer(t, psi):
        # A pure state of the whole system: S is zero by definition.
        _, _, x, y, z = _observable_row(t, partial_trace_impurity(psi))
        rows.append((t + 0.0, 0.0, x, y, z))

    t0 = time.perf_counter()
    record = evolve_rk8(h, np.array([0.0, 1.0], dtype=complex), cfg.integrator(), observer=observer)
    return {
        "rows": rows,
        "info": {
            "csv": "isolated.csv",
            "steps": record.n_steps,
            "max_norm_drift": record.max_norm_drift,
            "seconds": time.perf_counter() - t0,
        },
    }


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def write_csv(path: str | os.PathLike, rows) -> None:
    # repr() is the shortest string that round-trips the double exactly.
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array([[float(v) for v in row] for row in reader])
    return {name: data[:, i] for i, name in enumerate(CSV_HEADER)}


def write_plot_script(path: str | os.PathLike, lambdas, isolated: bool) -> None:
    dashes = [1, 2, 3, 4, 5, 6]
    lines = [
        "# gnuplot script; run `gnuplot plot.gp` inside the output directory",
        "set terminal svg size 900,600",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set output 'entropy.svg'",
        "set xlabel 't'",
        "set ylabel 'S'",
        "plot \\",
    ]
    entries = [
        f"  '{csv_name(v)}' using 1:2 with lines dt {dashes[i % len(dashes)]} title 'lambda = {lambda_tag(v)}'"
        for i, v in enumerate(lambdas)
    ]
    lines.append(", \\\n".join(entries))
    if isolated:
        for v in (lambdas[0], lambdas[-1]):
            tag = lambda_tag(v)
            for col, name in ((3, "X"), (4, "Y"), (5, "Z")):
                lines += [
                    f"set output 'spin_{name}_lambda_{tag}.svg'",
                    f"set ylabel '{name}'",
                    f"plot 'isolated.csv' using 1:{col} with lines title 'isolated', \\",
                    f"  '{csv_name(v)}' using 1:{col} with lines dt 2 title 'lambda = {tag}'",
                ]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def run_experiment(cfg: RunConfig) -> RunManifest:
    """Run the whole sweep and write every artifact into ``cfg.out_dir``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    freqs = cfg.frequencies()
    manifest = RunManifest(config=cfg.to_dict(), frequencies=[float(w) for w in freqs], software=_software())
    t_start = time.perf_counter()

    def flush():
        manifest.timings["total_seconds"] = time.perf_counter() - t_start
        (out / "manifest.json").write_text(manifest.to_json() + "\n")

    try:
        if cfg.threads > 1 and len(cfg.lambdas) > 1:
            with ProcessPoolExecutor(max_workers=min(cfg.threads, len(cfg.lambdas))) as pool:
                futures = [pool.submit(run_lambda, cfg, lam, freqs) for lam in cfg.lambdas]
                results = (f.result() for f in futures)
                _collect(results, out, manifest, flush)
        else:
            _collect((run_lambda(cfg, lam, freqs) for lam in cfg.lambdas), out, manifest, flush)

        if cfg.isolated_reference:
            try:
                ref = run_isolated_reference(cfg)
            except Exception as exc:  # noqa: BLE001
                raise StageError("isolated_reference", exc) from exc
            write_csv(out / "isolated.csv", ref["rows"])
            manifest.isolated = ref["info"]
            manifest.summary = summarize(out, cfg.lambdas)
            write_summary(out / "summary.csv", manifest.summary)

        write_plot_script(out / "plot.gp", list(cfg.lambdas), cfg.isolated_reference)
        manifest.status = "complete"
    except StageError as exc:
        manifest.failed_stage = exc.stage
        manifest.error = str(exc.cause)
        flush()
        raise
    flush()
    return manifest


def _collect(results, out: Path, manifest: RunManifest, flush) -> None:
    for res in results:
        tag = lambda_tag(res["lambda"])
        write_csv(out / res["info"]["csv"], res["rows"])
        save_spectrum(
            res["spectrum"],
            out / res["info"]["spectrum_file"],
            meta={"lambda": res["lambda"], "frequencies": manifest.frequencies},
        )
        manifest.lambdas[tag] = res["info"]
        log.info(
            "lambda=%s done: %d steps, drift %.2e",
            tag,
            res["info"]["integration"]["steps"],
            res["info"]["integration"]["max_norm_drift"],
        )
        flush()


def summarize(out_dir: str | os.PathLike, lambdas=None) -> list[dict[str, float]]:
    """Per-lambda late-time entropy and deviations from the isolated spin.

    The late window is the second half of the time axis.
    """
    out = Path(out_dir)
    iso_path = out / "isolated.csv"
    if not iso_path.exists():
        raise FileNotFoundError(f"missing isolated reference {iso_path}")
    iso = read_csv(iso_path)
    if lambdas is None:
        lambdas = sorted(float(p.stem.split("_")[-1]) for p in out.glob("sweep_lambda_*.csv"))
    rows = []
    for lam in lambdas:
        path = out / csv_name(lam)
        if not path.exists():
            raise FileNotFoundError(f"missing sweep output {path}")
        data = read_csv(path)
        if not np.array_equal(data["t"], iso["t"]):
            raise ValueError(f"{path}: time grid differs from the isolated reference")
        rows.append(summary_row(lam, data, iso))
    return rows


def summary_row(lam: float, data: dict[str, np.ndarray], iso: dict[str, np.ndarray]) -> dict[str, float]:
    t = data["t"]
    late = t >= 0.5 * t[-1]

    def rms(name):
        return float(math.sqrt(np.mean((data[name] - iso[name]) ** 2)))

    return {
        "lambda": float(lam),
        "S_late_mean": float(np.mean(data["S"][late])),
        "max_abs_dZ": float(np.max(np.abs(data["Z"] - iso["Z"]))),
        "rms_dX": rms("X"),
        "rms_dY": rms("Y"),
        "rms_dZ": rms("Z"),
    }


def write_summary(path: str | os.PathLike, rows: list[dict[str, float]]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) for k, v in row.items()})
