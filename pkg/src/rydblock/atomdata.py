"""Single-atom Rydberg data for 87Rb.

Energies are in MHz (E/h), magnetic fields in mT, lengths in micrometres.
Constants and quantum defects are read from the versioned files shipped in
``rydblock/data``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvariantError, AmbiguityError
from .wigner import clebsch_gordan

HALF = Fraction(1, 2)
L_LABELS = "spdfghiklmnoqrtuv"


def _half(value) -> Fraction:
    frac = Fraction(value).limit_denominator(2)
    if frac.denominator not in (1, 2) or float(frac) != float(value):
        raise InvariantError(f"{value!r} is not a half-integer")
    return frac


@dataclass(frozen=True)
class PhysicalConstants:
    rydberg_frequency: float  # MHz, reduced-mass corrected
    bohr_radius: float  # um
    bohr_magneton_over_h: float  # MHz/mT
    electron_g_factor: float
    orbital_g_factor: float
    hartree_frequency: float  # MHz
    atom_mass: float  # kg
    boltzmann_over_h: float  # MHz/K
    codata_version: str = "CODATA 2018"
    source_hash: str = ""

    @classmethod
    def from_file(cls, path=None) -> "PhysicalConstants":
        text = _read_data("constants.json", path)
        raw = json.loads(text)
        m_e = raw["electron_mass_kg"]
        mass = raw["atom_mass_u"] * raw["atomic_mass_unit_kg"]
        core_mass = mass - m_e
        return cls(
            rydberg_frequency=raw["rydberg_infinity_frequency_hz"] * 1e-6 / (1 + m_e / core_mass),
            bohr_radius=raw["bohr_radius_m"] * 1e6,
            bohr_magneton_over_h=raw["bohr_magneton_over_h_hz_per_t"] * 1e-9,
            electron_g_factor=raw["electron_g_factor"],
            orbital_g_factor=1.0 - m_e / core_mass,
            hartree_frequency=raw["hartree_frequency_hz"] * 1e-6,
            atom_mass=mass,
            boltzmann_over_h=raw["boltzmann_j_per_k"] / raw["planck_j_s"] * 1e-6,
            codata_version=raw["codata_version"],
            source_hash=hashlib.sha256(text.encode()).hexdigest(),
        )


def _read_data(name: str, path=None) -> str:
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    return resources.files("rydblock.data").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class DefectChannel:
    l: int
    j: Fraction
    delta0: float
    delta2: float
    n_min: int
    n_max: int
    citation: str

    def defect(self, n: int) -> float:
        return self.delta0 + self.delta2 / (n - self.delta0) ** 2


@dataclass(frozen=True)
class QuantumDefectTable:
    """Rydberg-Ritz coefficients per ``(l, j)`` channel.

    The text format is one channel per line::

        label  l  j  delta0  delta2  n_min  n_max  citation...

    Lines starting with ``#`` are comments.
    """

    channels: dict = field(default_factory=dict)
    content_hash: str = ""

    @classmethod
    def from_file(cls, path=None) -> "QuantumDefectTable":
        return cls.from_text(_read_data("quantum_defects.txt", path))

    @classmethod
    def from_text(cls, text: str) -> "QuantumDefectTable":
        channels = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 7)
            if len(parts) < 8:
                raise ConfigurationError(f"quantum-defect line {lineno}: expected 8 fields")
            _, l, j, d0, d2, n_min, n_max, cite = parts
            key = (int(l), Fraction(j))
            channels[key] = DefectChannel(
                int(l), Fraction(j), float(d0), float(d2), int(n_min), int(n_max), cite
            )
        return cls(channels, hashlib.sha256(text.encode()).hexdigest())

    @classmethod
    def hydrogenic(cls) -> "QuantumDefectTable":
        """Table with every defect zero (pure Coulomb levels)."""
        channels = {}
        for l in range(4):
            for j in ({HALF} if l == 0 else {l - HALF, l + HALF}):
                channels[(l, j)] = DefectChannel(l, j, 0.0, 0.0, 1, 10**6, "hydrogenic")
        return cls(channels, "hydrogenic")

    def defect(self, n: int, l: int, j) -> float:
        if l >= 4:
            return 0.0
        key = (l, _half(j))
        if key not in self.channels:
            raise ConfigurationError(
                f"no quantum-defect channel for {L_LABELS[l]}{key[1]} in the table"
            )
        return self.channels[key].defect(n)


@dataclass(frozen=True, order=True)
class AtomState:
    n: int
    l: int
    j: Fraction
    mj: Fraction

    def __post_init__(self):
        object.__setattr__(self, "j", _half(self.j))
        object.__setattr__(self, "mj", _half(self.mj))
        if self.n < 1 or self.l < 0 or self.l >= self.n:
            raise InvariantError(f"invalid (n, l) = ({self.n}, {self.l})")
        allowed = {HALF} if self.l == 0 else {self.l - HALF, self.l + HALF}
        if self.j not in allowed:
            raise InvariantError(f"j = {self.j} not allowed for l = {self.l}")
        if abs(self.mj) > self.j or (self.j - self.mj).denominator != 1:
            raise InvariantError(f"m_j = {self.mj} not allowed for j = {self.j}")

    @property
    def level(self) -> tuple:
        """``(n, l, j)`` without the magnetic sublevel."""
        return (self.n, self.l, self.j)

    def label(self) -> str:
        return f"{self.n}{L_LABELS[self.l]}{self.j},{self.mj}"


def shell_states(n: int, l: int) -> list[AtomState]:
    """All fine-structure Zeeman sublevels of ``(n, l)``, ordered by j then m_j."""
    js = [HALF] if l == 0 else [l - HALF, l + HALF]
    out = []
    for j in js:
        m = -j
        while m <= j:
            out.append(AtomState(n, l, j, m))
            m += 1
    return out


@lru_cache(maxsize=None)
def _default_data():
    return QuantumDefectTable.from_file(), PhysicalConstants.from_file()


def default_table() -> QuantumDefectTable:
    return _default_data()[0]


def default_constants() -> PhysicalConstants:
    return _default_data()[1]


def effective_n(n: int, l: int, j, table: QuantumDefectTable) -> float:
    return n - table.defect(n, l, j)


def level_energy(state: AtomState, table: QuantumDefectTable, consts: PhysicalConstants) -> float:
    """Binding energy in MHz (negative) from the Rydberg-Ritz formula."""
    return -consts.rydberg_frequency / effective_n(state.n, state.l, state.j, table) ** 2


def _zeeman_element(a: AtomState, b: AtomState, consts: PhysicalConstants) -> float:
    # <b| g_L L_z + g_S S_z |a> in units of mu_B B, via uncoupled (m_l, m_s)
    if a.mj != b.mj:
        return 0.0
    total = 0.0
    for ms in (-HALF, HALF):
        ml = a.mj - ms
        if abs(ml) > a.l:
            continue
        ca = clebsch_gordan(a.l, ml, HALF, ms, a.j, a.mj)
        cb = clebsch_gordan(b.l, ml, HALF, ms, b.j, b.mj)
        total += ca * cb * (consts.orbital_g_factor * float(ml) + consts.electron_g_factor * float(ms))
    return total


def zeeman_hamiltonian(
    manifold: list[AtomState],
    field: float,
    table: QuantumDefectTable,
    consts: PhysicalConstants,
    reference: float = 0.0,
) -> np.ndarray:
    """Fine-structure plus Zeeman Hamiltonian (MHz) of one ``(n, l)`` manifold.

    Diagonal entries carry ``level_energy - reference``; the field term
    couples ``j = l +- 1/2`` states of equal m_j. The field is along z.
    """
    if not manifold:
        return np.zeros((0, 0))
    nl = {(s.n, s.l) for s in manifold}
    if len(nl) != 1:
        raise InvariantError(f"zeeman_hamiltonian needs a single (n, l) manifold, got {sorted(nl)}")
    if field < 0:
        raise ConfigurationError("magnetic field must be >= 0")
    size = len(manifold)
    h = np.zeros((size, size))
    scale = consts.bohr_magneton_over_h * field
    for i, a in enumerate(manifold):
        h[i, i] = level_energy(a, table, consts) - reference
        for k, b in enumerate(manifold):
            if scale:
                h[k, i] += scale * _zeeman_element(a, b, consts)
    return 0.5 * (h + h.T)


@dataclass(frozen=True)
class DressedState:
    states: tuple  # AtomState basis of the {n d3/2, n d5/2} manifold
    amplitudes: np.ndarray
    energy: float  # MHz, relative to the zero-field d5/2 level
    field: float  # mT

    def overlap(self, state: AtomState) -> float:
        return float(self.amplitudes[self.states.index(state)])


def laser_excited_state(
    n: int,
    field: float,
    table: QuantumDefectTable,
    consts: PhysicalConstants,
    mj=HALF,
    l: int = 2,
) -> DressedState:
    """Field-dressed eigenstate of ``n l`` with the largest ``|l+1/2, mj>`` weight.

    Only the m_j block containing the target is diagonalised, so degeneracies
    between different m_j (for instance at zero field) cannot scramble the result.
    """
    manifold = shell_states(n, l)
    target = AtomState(n, l, l + HALF, mj)
    ref = level_energy(target, table, consts)
    h = zeeman_hamiltonian(manifold, field, table, consts, reference=ref)
    block = [i for i, s in enumerate(manifold) if s.mj == target.mj]
    vals, vecs = np.linalg.eigh(h[np.ix_(block, block)])
    t = block.index(manifold.index(target))
    weights = vecs[t, :] ** 2
    order = np.argsort(-weights, kind="stable")
    if len(order) > 1 and abs(weights[order[0]] - weights[order[1]]) < 1e-9:
        raise AmbiguityError(
            f"two dressed states share |<{target.label()}|psi>|^2 = {weights[order[0]]:.6f}"
        )
    best = order[0]
    vec = vecs[:, best]
    # phase: target component real positive
    if vec[t] < 0:
        vec = -vec
    amps = np.zeros(len(manifold))
    amps[block] = vec
    return DressedState(tuple(manifold), amps, float(vals[best]), field)
