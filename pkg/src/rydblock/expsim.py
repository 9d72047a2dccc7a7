"""Monte Carlo simulation of the two-site Rabi and blockade sequences.

Each shot samples static disorder (thermal positions and velocities, optical
pumping failures), evolves the two atoms coherently through a piecewise
constant Hamiltonian, then samples loss and detection. Shots are keyed by
``(seed, point, shot)`` through a Philox counter-based generator, so results do
not depend on how shots are split into shards.

Four-level basis order is ``|11>, |1r>, |r1>, |rr>`` with atom 1 the control
(site 1) and atom 2 the target (site 2). Frequencies are in MHz (over 2 pi) and
times in microseconds.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .atomdata import PhysicalConstants, default_constants
from .errors import ConfigurationError, InvariantError

CONTROL, TARGET = 0, 1
SITE_NAMES = ("control", "target")
SEQUENCE_KINDS = ("fig2", "fig2-crosstalk", "fig3")

# per-shot random layout, fixed so switching options keeps common random numbers
_U_POS_Y, _U_POS_Z, _U_VEL, _U_JIT, _U_PREP = 0, 2, 4, 6, 8
_U_STATE, _U_RYDLOSS, _U_TRAPLOSS, _U_DETECT = 10, 11, 13, 15
_N_UNIFORM = 17


def thermal_sigma(period: float, temperature: float, consts: PhysicalConstants | None = None) -> float:
    """Position spread (um) of a thermal atom in a harmonic trap.

    ``period`` in us, ``temperature`` in uK.
    """
    consts = consts or default_constants()
    if period <= 0 or temperature < 0:
        raise ConfigurationError("trap period must be > 0 and temperature >= 0")
    v_rms = _thermal_velocity(temperature, consts)
    omega = 2.0 * math.pi / (period * 1e-6)
    return v_rms / omega * 1e6


def _thermal_velocity(temperature_uk: float, consts: PhysicalConstants) -> float:
    kb = consts.boltzmann_over_h * 1e6 * 6.62607015e-34  # J/K
    return math.sqrt(kb * temperature_uk * 1e-6 / consts.atom_mass)


def effective_wavenumber(wavelengths_nm=(780.0, 480.0), counterpropagating: bool = True) -> float:
    """Two-photon wavenumber in 1/m."""
    k1, k2 = (2.0 * math.pi / (w * 1e-9) for w in wavelengths_nm)
    return abs(k2 - k1) if counterpropagating else k1 + k2


def doppler_sigma(
    temperature: float,
    wavelengths_nm=(780.0, 480.0),
    consts: PhysicalConstants | None = None,
    counterpropagating: bool = True,
) -> float:
    """RMS two-photon Doppler detuning in MHz (over 2 pi)."""
    consts = consts or default_constants()
    k = effective_wavenumber(wavelengths_nm, counterpropagating)
    return k * _thermal_velocity(temperature, consts) / (2.0 * math.pi) * 1e-6


def crosstalk_probability(omega: float, crosstalk_ratio: float, ac_stark_detuning: float) -> float:
    """Rydberg population at the non-addressed site, ``W^2 / (W^2 + D^2)``."""
    w = crosstalk_ratio * omega
    if w == 0.0:
        return 0.0
    return w * w / (w * w + ac_stark_detuning**2)


@dataclass
class ExperimentConfig:
    """Physical and imperfection parameters of a simulated run.

    Spreads left as ``None`` are derived from the trap periods and temperature.
    """

    Z_um: float = 11.0
    sigma_y_um: float | None = 2.6
    sigma_z_um: float | None = 0.23
    temperature_uk: float = 150.0
    axial_period_us: float = 139.0
    radial_period_us: float = 12.3
    omega_mhz: float = 0.51
    field_mt: float = 1.15
    wavelength_lower_nm: float = 780.0
    wavelength_upper_nm: float = 480.0
    counterpropagating: bool = True
    prep_error: float = 0.05
    detection_error: float = 0.05
    trap_off_loss: float = 0.03
    rydberg_loss_prob: float = 1.0
    crosstalk_ratio: float = 0.019
    ac_stark_detuning_mhz: float = 2.0
    omega_jitter: float = 0.0
    position_disorder: bool = True
    doppler: bool = True
    blockade_mhz: float | None = None  # fixed shift; None uses the pair-interaction curve
    dynamics: str = "four-level"  # or "pair" for full pair-basis dynamics
    shots: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("prep_error", "detection_error", "trap_off_loss", "rydberg_loss_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} = {v} is not a probability")
        if self.shots < 1:
            raise ConfigurationError("shots must be >= 1")
        if self.omega_mhz <= 0:
            raise ConfigurationError("omega_mhz must be > 0")
        if self.Z_um <= 0:
            raise ConfigurationError("Z_um must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in 64 bits")
        if self.dynamics not in ("four-level", "pair"):
            raise ConfigurationError(f"unknown dynamics {self.dynamics!r}")

    @property
    def sigma_y(self) -> float:
        if self.sigma_y_um is not None:
            return self.sigma_y_um
        return thermal_sigma(self.axial_period_us, self.temperature_uk)

    @property
    def sigma_z(self) -> float:
        if self.sigma_z_um is not None:
            return self.sigma_z_um
        return thermal_sigma(self.radial_period_us, self.temperature_uk)

    @property
    def pi_time(self) -> float:
        return 1.0 / (2.0 * self.omega_mhz)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class PulseStep:
    site: int  # CONTROL or TARGET: where the excitation lasers point
    duration: float  # us
    kind: str = "rydberg-drive"  # or "idle"

    def __post_init__(self):
        if self.duration < 0:
            raise InvariantError("pulse duration must be >= 0")
        if self.kind not in ("rydberg-drive", "idle"):
            raise InvariantError(f"unknown step kind {self.kind!r}")


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple

    @classmethod
    def fig2(cls, T: float) -> "PulseSequence":
        """Single excitation pulse of length ``T`` on the target site."""
        return cls((PulseStep(TARGET, T),))

    @classmethod
    def fig3(cls, T: float, omega: float, pi_time: float | None = None) -> "PulseSequence":
        """pi pulse on the control, ``T`` on the target, pi pulse on the control."""
        pi_time = 1.0 / (2.0 * omega) if pi_time is None else pi_time
        if abs(pi_time * 2.0 * omega - 1.0) > 1e-9:
            raise InvariantError(f"pi time {pi_time} us inconsistent with omega {omega} MHz")
        return cls((PulseStep(CONTROL, pi_time), PulseStep(TARGET, T), PulseStep(CONTROL, pi_time)))


@dataclass
class ShotDisorder:
    """Static per-shot disorder for a batch of shots (arrays of shape ``(shots,)``)."""

    y: np.ndarray  # (shots, 2) um
    z: np.ndarray  # (shots, 2) um
    velocity: np.ndarray  # (shots, 2) m/s along the excitation beams
    doppler: np.ndarray  # (shots, 2) MHz
    rabi_scale: np.ndarray  # (shots, 2)
    bright: np.ndarray  # (shots, 2) bool, False = left dark by optical pumping
    present: np.ndarray  # (shots, 2) bool, atom loaded in the site
    uniforms: np.ndarray  # (shots, _N_UNIFORM)

    @classmethod
    def ideal(cls, shots: int = 1, present=(True, True)) -> "ShotDisorder":
        zeros = np.zeros((shots, 2))
        pres = np.broadcast_to(np.asarray(present, dtype=bool), (shots, 2)).copy()
        return cls(zeros, zeros.copy(), zeros.copy(), zeros.copy(), np.ones((shots, 2)),
                   np.ones((shots, 2), dtype=bool), pres, np.full((shots, _N_UNIFORM), 0.5))


def shot_uniforms(seed: int, point: int, shots: np.ndarray) -> np.ndarray:
    """Uniform variates for each shot, keyed by ``(seed, point, shot)``."""
    out = np.empty((len(shots), _N_UNIFORM))
    for i, s in enumerate(shots):
        key = (int(point) << 32) | int(s)
        gen = np.random.Generator(np.random.Philox(key=[seed, key]))
        out[i] = gen.random(_N_UNIFORM)
    return out


def sample_disorder(config: ExperimentConfig, uniforms: np.ndarray, present=(True, True),
                    consts: PhysicalConstants | None = None) -> ShotDisorder:
    consts = consts or default_constants()
    shots = len(uniforms)
    normal = ndtri(np.clip(uniforms, 1e-300, 1.0 - 1e-16))
    if config.position_disorder:
        y = config.sigma_y * normal[:, _U_POS_Y:_U_POS_Y + 2]
        z = config.sigma_z * normal[:, _U_POS_Z:_U_POS_Z + 2]
    else:
        y = np.zeros((shots, 2))
        z = np.zeros((shots, 2))
    if config.doppler:
        v = _thermal_velocity(config.temperature_uk, consts) * normal[:, _U_VEL:_U_VEL + 2]
    else:
        v = np.zeros((shots, 2))
    k = effective_wavenumber((config.wavelength_lower_nm, config.wavelength_upper_nm),
                             config.counterpropagating)
    doppler = k * v / (2.0 * math.pi) * 1e-6
    scale = 1.0 + config.omega_jitter * normal[:, _U_JIT:_U_JIT + 2]
    bright = uniforms[:, _U_PREP:_U_PREP + 2] >= config.prep_error
    pres = np.broadcast_to(np.asarray(present, dtype=bool), (shots, 2)).copy()
    return ShotDisorder(y, z, v, doppler, scale, bright, pres, uniforms)


def _step_hamiltonians(step: PulseStep, disorder: ShotDisorder, shift: np.ndarray,
                       config: ExperimentConfig) -> np.ndarray:
    shots = len(shift)
    h = np.zeros((shots, 4, 4))
    active = disorder.bright & disorder.present
    rabi = np.zeros((shots, 2))
    detuning = disorder.doppler.copy()
    if step.kind == "rydberg-drive":
        other = 1 - step.site
        rabi[:, step.site] = config.omega_mhz * disorder.rabi_scale[:, step.site]
        rabi[:, other] = config.crosstalk_ratio * config.omega_mhz * disorder.rabi_scale[:, other]
        detuning[:, other] += config.ac_stark_detuning_mhz
    rabi *= active
    half1, half2 = 0.5 * rabi[:, 0], 0.5 * rabi[:, 1]
    # atom 1 flips |11>-|r1> and |1r>-|rr>; atom 2 flips |11>-|1r> and |r1>-|rr>
    h[:, 0, 2] = h[:, 2, 0] = half1
    h[:, 1, 3] = h[:, 3, 1] = half1
    h[:, 0, 1] = h[:, 1, 0] = half2
    h[:, 2, 3] = h[:, 3, 2] = half2
    h[:, 1, 1] = -detuning[:, 1]
    h[:, 2, 2] = -detuning[:, 0]
    h[:, 3, 3] = -detuning[:, 0] - detuning[:, 1] + shift
    return h


def _propagate(h: np.ndarray, psi: np.ndarray, duration: float) -> np.ndarray:
    if duration == 0.0:
        return psi
    vals, vecs = np.linalg.eigh(h)
    phase = np.exp(-2j * math.pi * vals * duration)
    coeff = np.einsum("sji,sj->si", vecs, psi)
    return np.einsum("sij,sj->si", vecs, phase * coeff)


def evolve_two_atom(sequence: PulseSequence, disorder: ShotDisorder, blockade_shift,
                    config: ExperimentConfig, initial=None) -> np.ndarray:
    """Final populations over ``{11, 1r, r1, rr}`` for every shot in ``disorder``.

    ``blockade_shift`` (MHz) is a scalar or one value per shot.
    """
    shots = len(disorder.doppler)
    shift = np.broadcast_to(np.asarray(blockade_shift, dtype=float), (shots,)).copy()
    shift[~np.isfinite(shift)] = 1e9
    if initial is None:
        psi = np.zeros((shots, 4), dtype=complex)
        psi[:, 0] = 1.0
    else:
        psi = np.broadcast_to(np.asarray(initial, dtype=complex), (shots, 4)).copy()
        if np.any(np.abs(np.linalg.norm(psi, axis=1) - 1.0) > 1e-12):
            raise InvariantError("initial state is not normalised")
    for step in sequence.steps:
        psi = _propagate(_step_hamiltonians(step, disorder, shift, config), psi, step.duration)
    probs = np.abs(psi) ** 2
    drift = np.abs(probs.sum(axis=1) - 1.0).max()
    if drift > 1e-9:
        raise InvariantError(f"norm drift {drift:.2e} during evolution")
    return probs


def evolve_pair_basis(sequence: PulseSequence, disorder: ShotDisorder, config: ExperimentConfig,
                      model=None) -> np.ndarray:
    """Same observables as ``evolve_two_atom`` but with the full pair Hamiltonian.

    The space is ``|gg>, |rg>, |gr>`` plus every pair state; the doubly excited
    population is summed over the pair block. Slow: one pair diagonalisation
    per shot and step.
    """
    from .pairint import Geometry, PairInteraction

    model = model or PairInteraction()
    rr, e_rr = model.rr_vector(config.field_mt)
    dim = len(model.basis)
    out = np.zeros((len(disorder.doppler), 4))
    active = disorder.bright & disorder.present
    for i in range(len(out)):
        dy = disorder.y[i, 0] - disorder.y[i, 1]
        Z = config.Z_um + disorder.z[i, 1] - disorder.z[i, 0]
        hp = model.hamiltonian(Geometry.from_offset(Z, dy), config.field_mt) - e_rr * np.eye(dim)
        d1, d2 = disorder.doppler[i]
        psi = np.zeros(dim + 3, dtype=complex)
        psi[0] = 1.0
        for step in sequence.steps:
            h = np.zeros((dim + 3, dim + 3))
            h[3:, 3:] = hp
            det = np.array([d1, d2])
            rabi = np.zeros(2)
            if step.kind == "rydberg-drive":
                other = 1 - step.site
                rabi[step.site] = config.omega_mhz * disorder.rabi_scale[i, step.site]
                rabi[other] = config.crosstalk_ratio * config.omega_mhz * disorder.rabi_scale[i, other]
                det[other] += config.ac_stark_detuning_mhz
            rabi = rabi * active[i]
            h[1, 1] = -det[0]
            h[2, 2] = -det[1]
            h[3:, 3:] -= (det[0] + det[1]) * np.eye(dim)
            h[0, 1] = h[1, 0] = 0.5 * rabi[0]
            h[0, 2] = h[2, 0] = 0.5 * rabi[1]
            h[2, 3:] = h[3:, 2] = 0.5 * rabi[0] * rr
            h[1, 3:] = h[3:, 1] = 0.5 * rabi[1] * rr
            if step.duration:
                vals, vecs = np.linalg.eigh(h)
                psi = vecs @ (np.exp(-2j * math.pi * vals * step.duration) * (vecs.T @ psi))
        p = np.abs(psi) ** 2
        out[i] = (p[0], p[2], p[1], p[3:].sum())
    return out


_SHIFT_TABLES: dict = {}


def blockade_lookup(config: ExperimentConfig, calculator=None):
    """Callable ``|dy| -> B`` (MHz) from the pair-interaction blockade curve."""
    from .blockade import BlockadeCalculator

    dy_max = max(20.0, 6.0 * math.sqrt(2.0) * config.sigma_y)
    key = (config.Z_um, config.field_mt, config.omega_mhz, dy_max)
    if key not in _SHIFT_TABLES:
        calc = calculator or BlockadeCalculator()
        _SHIFT_TABLES[key] = calc.shift_table(config.Z_um, config.field_mt, config.omega_mhz, dy_max)
    dys, shifts = _SHIFT_TABLES[key]
    return lambda dy: np.interp(np.abs(dy), dys, shifts)


@dataclass
class ShotRecord:
    positions: np.ndarray  # (2, 2): (y, z) per atom, um
    velocities: np.ndarray  # (2,) m/s
    doppler: np.ndarray  # (2,) MHz
    blockade_shift: float  # MHz
    probabilities: np.ndarray  # over |11>, |1r>, |r1>, |rr>
    present_after: np.ndarray  # (2,) bool measurement outcome per site
    post_selected: bool


@dataclass
class PointResult:
    T: float
    probabilities: np.ndarray  # (shots, 4)
    measured: np.ndarray  # (shots, 2) bool, atom seen after the sequence
    keep: np.ndarray  # (shots,) bool, post-selection mask
    shift: np.ndarray
    disorder: ShotDisorder

    def records(self) -> list[ShotRecord]:
        d = self.disorder
        return [
            ShotRecord(np.stack([d.y[i], d.z[i]], axis=1), d.velocity[i], d.doppler[i],
                       float(self.shift[i]), self.probabilities[i], self.measured[i], bool(self.keep[i]))
            for i in range(len(self.keep))
        ]

    def rydberg_population(self, site: int) -> np.ndarray:
        p = self.probabilities
        return p[:, 3] + (p[:, 2] if site == CONTROL else p[:, 1])


def _occupancy(kind: str) -> tuple:
    return {"fig2": (False, True), "fig2-crosstalk": (True, False), "fig3": (True, True)}[kind]


def _sequence(kind: str, T: float, config: ExperimentConfig) -> PulseSequence:
    if kind == "fig3":
        return PulseSequence.fig3(T, config.omega_mhz)
    return PulseSequence.fig2(T)


def measure(probs: np.ndarray, disorder: ShotDisorder, config: ExperimentConfig) -> np.ndarray:
    """Sample which sites show an atom in the second image."""
    u = disorder.uniforms
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    outcome = (u[:, _U_STATE, None] > cdf).sum(axis=1)
    rydberg = np.stack([(outcome == 2) | (outcome == 3), (outcome == 1) | (outcome == 3)], axis=1)
    lost = (rydberg & (u[:, _U_RYDLOSS:_U_RYDLOSS + 2] < config.rydberg_loss_prob)) | (
        u[:, _U_TRAPLOSS:_U_TRAPLOSS + 2] < config.trap_off_loss
    )
    # a lost atom is missed by the detection with probability detection_error
    seen = ~lost | (u[:, _U_DETECT:_U_DETECT + 2] < config.detection_error)
    return seen & disorder.present


def simulate_point(config: ExperimentConfig, kind: str, T: float, point: int = 0,
                   shot_range=None, shift_fn=None, model=None) -> PointResult:
    """All shots (or ``shot_range``) of one sequence at one pulse length."""
    if kind not in SEQUENCE_KINDS:
        raise ConfigurationError(f"unknown sequence {kind!r}; choose from {SEQUENCE_KINDS}")
    shots = np.arange(config.shots) if shot_range is None else np.asarray(shot_range)
    disorder = sample_disorder(config, shot_uniforms(config.seed, point, shots), _occupancy(kind))
    sequence = _sequence(kind, T, config)
    if config.blockade_mhz is not None:
        shift = np.full(len(shots), float(config.blockade_mhz))
    elif not all(_occupancy(kind)):
        # one loaded atom: |rr> is unreachable and no pair curve is needed
        shift = np.zeros(len(shots))
    else:
        fn = shift_fn or blockade_lookup(config)
        shift = fn(disorder.y[:, 0] - disorder.y[:, 1])
    if config.dynamics == "pair":
        probs = evolve_pair_basis(sequence, disorder, config, model)
    else:
        probs = evolve_two_atom(sequence, disorder, shift, config)
    seen = measure(probs, disorder, config)
    keep = seen[:, CONTROL] if kind == "fig3" else np.ones(len(shots), dtype=bool)
    return PointResult(T, probs, seen, keep, shift, disorder)


@dataclass
class ExperimentResult:
    kind: str
    rows: list  # dicts: T, site, mean_retention, std_retention, stderr, n_shots, n_postselected, ...
    config: ExperimentConfig

    def column(self, site: str, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows if r["site"] == site])

    def at(self, T: float, site: str) -> dict:
        best = min((r for r in self.rows if r["site"] == site), key=lambda r: abs(r["T"] - T))
        return best


def _summarise(point: PointResult, kind: str) -> list[dict]:
    sites = {"fig2": (TARGET,), "fig2-crosstalk": (CONTROL,), "fig3": (CONTROL, TARGET)}[kind]
    rows = []
    keep = point.keep
    n_kept = int(keep.sum())
    for site in sites:
        data = point.measured[keep, site].astype(float)
        mean = float(data.mean()) if n_kept else math.nan
        std = float(data.std(ddof=1)) if n_kept > 1 else math.nan
        rows.append({
            "T": point.T,
            "site": SITE_NAMES[site],
            "mean_retention": mean,
            "std_retention": std,
            "stderr": std / math.sqrt(n_kept) if n_kept > 1 else math.nan,
            "n_shots": len(keep),
            "n_postselected": n_kept,
            "mean_rydberg_population": float(point.rydberg_population(site).mean()),
        })
    return rows


def run_experiment(config: ExperimentConfig, kind: str, T_grid, shards: int = 1,
                   shift_fn=None) -> ExperimentResult:
    """Per-pulse-length retention statistics for a sequence kind.

    ``shards`` splits the shots of every point into independently simulated
    chunks; the outcome is identical for any shard count.
    """
    T_grid = [float(t) for t in T_grid]
    if not T_grid:
        raise ConfigurationError("T grid is empty")
    if kind not in SEQUENCE_KINDS:
        raise ConfigurationError(f"unknown sequence {kind!r}; choose from {SEQUENCE_KINDS}")
    if config.blockade_mhz is None and kind == "fig3" and shift_fn is None:
        shift_fn = blockade_lookup(config)
    rows = []
    for point, T in enumerate(T_grid):
        parts = [
            simulate_point(config, kind, T, point, chunk, shift_fn)
            for chunk in np.array_split(np.arange(config.shots), max(1, shards))
            if len(chunk)
        ]
        merged = PointResult(
            T,
            np.concatenate([p.probabilities for p in parts]),
            np.concatenate([p.measured for p in parts]),
            np.concatenate([p.keep for p in parts]),
            np.concatenate([p.shift for p in parts]),
            ShotDisorder(*(np.concatenate([getattr(p.disorder, f.name) for p in parts])
                           for f in dataclasses.fields(ShotDisorder))),
        )
        rows.extend(_summarise(merged, kind))
    return ExperimentResult(kind, rows, config)


def bright_pi_efficiency(config: ExperimentConfig) -> float:
    """Mean Rydberg population of an optically pumped atom after one pi pulse.

    Averaged over the configured Doppler and Rabi-frequency disorder, using
    the exact populations rather than sampled outcomes.
    """
    bright = dataclasses.replace(config, prep_error=0.0)
    uniforms = shot_uniforms(config.seed, 2**31 - 1, np.arange(config.shots))
    disorder = sample_disorder(bright, uniforms, (False, True))
    probs = evolve_two_atom(PulseSequence.fig2(config.pi_time), disorder, 0.0, bright)
    return float(probs[:, 1].mean())


def with_excitation_efficiency(config: ExperimentConfig, efficiency: float) -> ExperimentConfig:
    """Copy of ``config`` whose pi-pulse excitation probability equals ``efficiency``.

    The shortfall beyond Doppler and Rabi disorder is assigned to atoms left
    dark by optical pumping, which stay in the ground state.
    """
    if not 0.0 < efficiency <= 1.0:
        raise ConfigurationError("efficiency must be in (0, 1]")
    bright = bright_pi_efficiency(config)
    if efficiency > bright:
        raise ConfigurationError(
            f"efficiency {efficiency} exceeds the disorder-limited value {bright:.4f}"
        )
    return dataclasses.replace(config, prep_error=1.0 - efficiency / bright)
