"""Two-atom Rydberg pair basis, dipole-dipole coupling and molecular spectra.

Pair states are ordered (non-symmetrised) products ``|a> (x) |b>`` of atom 1
and atom 2. The quantisation axis is the magnetic field; the interatomic axis
lies in the xz-plane at polar angle ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment

from .atomdata import (
    HALF,
    L_LABELS,
    AtomState,
    PhysicalConstants,
    QuantumDefectTable,
    default_constants,
    default_table,
    laser_excited_state,
    level_energy,
    shell_states,
    zeeman_hamiltonian,
)
from .errors import InvariantError, NumericalError
from .radial import MatrixElementCache, dipole_matrix_element

Shell = tuple  # (n, l)


def forster_channels(n: int) -> list[tuple[Shell, Shell]]:
    """(nd, nd) plus both orderings of the (n+1)p(n-1)f and (n+2)p(n-2)f channels."""
    return [
        ((n, 2), (n, 2)),
        ((n + 1, 1), (n - 1, 3)),
        ((n - 1, 3), (n + 1, 1)),
        ((n + 2, 1), (n - 2, 3)),
        ((n - 2, 3), (n + 2, 1)),
    ]


DEFAULT_CHANNELS = forster_channels(79)


@dataclass(frozen=True, order=True)
class PairState:
    a: AtomState
    b: AtomState

    @property
    def total_m(self):
        return self.a.mj + self.b.mj

    def label(self) -> str:
        return f"{self.a.label()}; {self.b.label()}"


@dataclass(frozen=True)
class PairBasis:
    states: tuple
    channels: tuple

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dimension(self) -> int:
        return len(self.states)

    @cached_property
    def atom_states(self) -> tuple:
        """Distinct single-atom states, in first-appearance order."""
        seen = {}
        for s in self.states:
            seen.setdefault(s.a, None)
            seen.setdefault(s.b, None)
        return tuple(seen)

    @cached_property
    def atom_index(self) -> tuple[np.ndarray, np.ndarray]:
        lookup = {s: i for i, s in enumerate(self.atom_states)}
        first = np.array([lookup[s.a] for s in self.states], dtype=int)
        second = np.array([lookup[s.b] for s in self.states], dtype=int)
        return first, second

    @cached_property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    def shells(self) -> list[Shell]:
        out = []
        for c in self.channels:
            for sh in c:
                if sh not in out:
                    out.append(sh)
        return out


def build_pair_basis(channels) -> PairBasis:
    """Enumerate all fine-structure Zeeman product states of the given channels.

    Order: channel as given, then ``(j1, m1, j2, m2)`` lexicographic.
    """
    channels = tuple((tuple(a), tuple(b)) for a, b in channels)
    if len(set(channels)) != len(channels):
        raise InvariantError("duplicate pair shells in channel list")
    states = []
    for (n1, l1), (n2, l2) in channels:
        for a in shell_states(n1, l1):
            for b in shell_states(n2, l2):
                states.append(PairState(a, b))
    return PairBasis(tuple(states), channels)


@dataclass(frozen=True)
class Geometry:
    R: float  # um
    theta: float  # rad, interatomic axis vs field axis

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise InvariantError(f"theta = {self.theta} outside [0, pi]")
        if self.R < 0:
            raise InvariantError("R must be >= 0")

    @classmethod
    def from_offset(cls, Z: float, dy: float) -> "Geometry":
        """Sites separated by ``Z`` along the field, atoms offset by ``dy`` transversely."""
        return cls(math.hypot(Z, dy), math.atan2(abs(dy), Z))


def _require_distance(geom: Geometry) -> None:
    if geom.R <= 0:
        raise InvariantError("R = 0 is a singular geometry for the dipole-dipole operator")


def _angular_weights(theta: float) -> dict:
    # coefficients of d1_p d2_q in d1.d2 - 3 (d1.n)(d2.n), n = (sin, 0, cos)
    c, s = math.cos(theta), math.sin(theta)
    w0 = 1.0 - 3.0 * c * c
    w1 = 3.0 / math.sqrt(2.0) * s * c
    w2 = -1.5 * s * s
    return {
        (0, 0): w0,
        (1, -1): 0.5 * w0,
        (-1, 1): 0.5 * w0,
        (1, 0): w1,
        (0, 1): w1,
        (-1, 0): -w1,
        (0, -1): -w1,
        (1, 1): w2,
        (-1, -1): w2,
    }


def _bohr(R_um: float, consts: PhysicalConstants) -> float:
    return R_um / consts.bohr_radius


def dipole_dipole_element(
    s: PairState,
    t: PairState,
    geom: Geometry,
    cache: MatrixElementCache,
    consts: PhysicalConstants,
) -> float:
    """``<s|V_dd|t>`` in MHz for one pair of basis states."""
    _require_distance(geom)
    total = 0.0
    for (p, q), w in _angular_weights(geom.theta).items():
        if w == 0.0:
            continue
        d1 = dipole_matrix_element(t.a, s.a, p, cache)
        if d1 == 0.0:
            continue
        total += w * d1 * dipole_matrix_element(t.b, s.b, q, cache)
    return total * consts.hartree_frequency / _bohr(geom.R, consts) ** 3


def diagonalize(H: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.

    Each eigenvector is phased so its largest-magnitude component is real and
    positive.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvariantError("diagonalize needs a square matrix")
    if H.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    scale = np.linalg.norm(H)
    if np.linalg.norm(H - H.conj().T) > tol * max(scale, 1e-300):
        raise InvariantError("matrix is not Hermitian within tolerance")
    vals, vecs = np.linalg.eigh(H)
    big = np.argmax(np.abs(vecs), axis=0)
    pivot = vecs[big, np.arange(vecs.shape[1])]
    vecs = vecs * (np.abs(pivot) / pivot)[None, :]
    if not np.iscomplexobj(H):
        vecs = vecs.real
    resid = np.linalg.norm(H @ vecs - vecs * vals[None, :], axis=0)
    if resid.size and resid.max() > 1e-8 * max(scale, 1e-300):
        raise NumericalError(f"eigen-residual {resid.max():.3e} exceeds 1e-8 ||H||")
    return vals, vecs


@dataclass
class MolecularSpectrum:
    eigenvalues: np.ndarray  # MHz relative to twice the dressed |r> energy
    overlaps: np.ndarray  # kappa^2 with |rr>
    geometry: Geometry
    field: float
    vectors: np.ndarray | None = None

    def dominant(self) -> int:
        return int(np.argmax(self.overlaps))


class PairInteraction:
    """Precomputed pair Hamiltonian pieces for one basis.

    Holds single-atom dipole matrices and the nine ``d1_p d2_q`` products so a
    Hamiltonian at any geometry or field is a few array operations.
    """

    def __init__(
        self,
        basis: PairBasis | None = None,
        table: QuantumDefectTable | None = None,
        consts: PhysicalConstants | None = None,
        cache: MatrixElementCache | None = None,
        rydberg_n: int | None = None,
        rydberg_l: int = 2,
        rydberg_mj=HALF,
    ):
        self.basis = basis if basis is not None else build_pair_basis(DEFAULT_CHANNELS)
        if not len(self.basis):
            raise InvariantError("pair basis is empty")
        self.table = table or default_table()
        self.consts = consts or default_constants()
        self.cache = cache if cache is not None else MatrixElementCache(self.table, self.consts)
        self.rydberg_n = rydberg_n if rydberg_n is not None else self.basis.channels[0][0][0]
        self.rydberg_l = rydberg_l
        self.rydberg_mj = HALF if rydberg_mj is None else rydberg_mj
        target = AtomState(self.rydberg_n, rydberg_l, rydberg_l + HALF, self.rydberg_mj)
        self.reference_level = level_energy(target, self.table, self.consts)
        self._products = None
        self._h0_cache: dict = {}

    # single-atom pieces
    def _atom_dipoles(self) -> dict:
        atoms = self.basis.atom_states
        mats = {}
        for q in (-1, 0, 1):
            d = np.zeros((len(atoms), len(atoms)))
            for i, a in enumerate(atoms):
                for k, b in enumerate(atoms):
                    if b.mj == a.mj + q and abs(a.l - b.l) == 1:
                        d[k, i] = dipole_matrix_element(a, b, q, self.cache)
            mats[q] = d
        return mats

    @property
    def dipole_products(self) -> dict:
        """``{(p, q): <s| d1_p d2_q |t>}`` over the pair basis, atomic units."""
        if self._products is None:
            d = self._atom_dipoles()
            i1, i2 = self.basis.atom_index
            self._products = {
                (p, q): d[p][np.ix_(i1, i1)] * d[q][np.ix_(i2, i2)]
                for p in (-1, 0, 1)
                for q in (-1, 0, 1)
            }
        return self._products

    def atom_hamiltonian(self, field: float) -> np.ndarray:
        """Block-diagonal single-atom Hamiltonian over ``basis.atom_states``."""
        atoms = self.basis.atom_states
        h = np.zeros((len(atoms), len(atoms)))
        groups: dict = {}
        for i, a in enumerate(atoms):
            groups.setdefault((a.n, a.l), []).append(i)
        for idx in groups.values():
            block = zeeman_hamiltonian([atoms[i] for i in idx], field, self.table, self.consts,
                                       reference=self.reference_level)
            h[np.ix_(idx, idx)] = block
        return h

    def unperturbed(self, field: float) -> np.ndarray:
        """Pair energies plus both atoms' Zeeman terms, relative to twice the nd5/2 level."""
        key = float(field)
        if key not in self._h0_cache:
            h1 = self.atom_hamiltonian(field)
            i1, i2 = self.basis.atom_index
            same1 = i1[:, None] == i1[None, :]
            same2 = i2[:, None] == i2[None, :]
            h = h1[np.ix_(i1, i1)] * same2 + h1[np.ix_(i2, i2)] * same1
            self._h0_cache = {key: h}
        return self._h0_cache[key]

    def interaction(self, geom: Geometry) -> np.ndarray:
        _require_distance(geom)
        prods = self.dipole_products
        v = sum(w * prods[pq] for pq, w in _angular_weights(geom.theta).items() if w != 0.0)
        return v * (self.consts.hartree_frequency / _bohr(geom.R, self.consts) ** 3)

    def hamiltonian(self, geom: Geometry, field: float) -> np.ndarray:
        h = self.unperturbed(field) + self.interaction(geom)
        return 0.5 * (h + h.T)

    def dressed(self, field: float):
        return laser_excited_state(self.rydberg_n, field, self.table, self.consts,
                                   mj=self.rydberg_mj, l=self.rydberg_l)

    def rr_vector(self, field: float) -> tuple[np.ndarray, float]:
        """``|r> (x) |r>`` in the pair basis and its energy (MHz, same reference)."""
        dressed = self.dressed(field)
        amp = {s: a for s, a in zip(dressed.states, dressed.amplitudes)}
        single = np.array([amp.get(s, 0.0) for s in self.basis.atom_states])
        i1, i2 = self.basis.atom_index
        vec = single[i1] * single[i2]
        return vec, 2.0 * dressed.energy

    def spectrum(self, geom: Geometry, field: float, keep_vectors: bool = False) -> MolecularSpectrum:
        rr, e_rr = self.rr_vector(field)
        vals, vecs = diagonalize(self.hamiltonian(geom, field))
        kappa = (vecs.T @ rr) ** 2
        return MolecularSpectrum(vals - e_rr, kappa, geom, field, vecs if keep_vectors else None)


def assemble_hamiltonian(basis, geom, field, table=None, cache=None, consts=None) -> np.ndarray:
    """Full pair Hamiltonian (MHz) relative to twice the zero-field nd5/2 level."""
    return PairInteraction(basis, table, consts, cache).hamiltonian(geom, field)


def molecular_spectrum(geom: Geometry, field: float, model: PairInteraction | None = None) -> MolecularSpectrum:
    model = model or PairInteraction()
    return model.spectrum(geom, field)


def c6_perturbative(
    n: int | None = None,
    field: float = 0.0,
    theta: float = 0.0,
    model: PairInteraction | None = None,
    dipole_scale: float = 1.0,
    degeneracy_tol: float = 1e-6,
) -> float:
    """Second-order van der Waals coefficient of ``|rr>`` in MHz um^6.

    Sums ``|<k|V R^3|rr>|^2 / (E_rr - E_k)`` over eigenstates ``k`` of the
    unperturbed pair Hamiltonian that are not degenerate with ``|rr>``. When
    ``|rr>`` shares its energy with other pair states (zero field), the
    second-order effective Hamiltonian on that degenerate set is diagonalised
    and the eigenvalue whose eigenvector overlaps ``|rr>`` most is returned.
    ``dipole_scale`` multiplies every single-atom dipole element.
    """
    if model is None:
        model = PairInteraction(build_pair_basis(forster_channels(n)), rydberg_n=n)
    rr, e_rr = model.rr_vector(field)
    vals, vecs = np.linalg.eigh(model.unperturbed(field))
    gap = e_rr - vals
    near = np.abs(gap) < degeneracy_tol
    # V at R = 1 um is V R^3 in MHz um^3
    w = model.interaction(Geometry(1.0, theta)) * dipole_scale**2
    w_eig = vecs.T @ w @ vecs
    first = w_eig[np.ix_(near, near)]
    if np.abs(first).max(initial=0.0) > 1e-9 * max(np.abs(w_eig).max(), 1e-300):
        raise NumericalError("|rr> is resonantly coupled at first order; C6 is undefined")
    coupling = w_eig[np.ix_(~near, near)]
    heff = coupling.T @ (coupling / gap[~near, None])
    target = vecs[:, near].T @ rr
    if heff.shape[0] == 1:
        return float(heff[0, 0])
    evals, evecs = np.linalg.eigh(heff)
    return float(evals[np.argmax((evecs.T @ target) ** 2)])


def asymptotic_energies(model: PairInteraction, field: float) -> list[dict]:
    """Non-interacting two-atom energies at one field, one row per pair level.

    Rows carry the channel, dominant single-atom labels and the energy in MHz
    relative to twice the zero-field nd5/2 level. Mirror-image channels
    (``(p, f)`` and ``(f, p)``) are reported once.
    """
    atoms = model.basis.atom_states
    h1 = model.atom_hamiltonian(field)
    shells: dict = {}
    for i, a in enumerate(atoms):
        shells.setdefault((a.n, a.l), []).append(i)
    levels = {}
    for sh, idx in shells.items():
        vals, vecs = np.linalg.eigh(h1[np.ix_(idx, idx)])
        labels = [atoms[idx[int(np.argmax(vecs[:, k] ** 2))]] for k in range(len(idx))]
        levels[sh] = list(zip(vals, labels))
    rows = []
    done = set()
    for c in model.basis.channels:
        key = tuple(sorted(c))
        if key in done:
            continue
        done.add(key)
        s1, s2 = c
        for e1, a in levels[s1]:
            for e2, b in levels[s2]:
                if s1 == s2 and b < a:
                    continue
                rows.append({
                    "field": field,
                    "channel": f"{s1[0]}{L_LABELS[s1[1]]}+{s2[0]}{L_LABELS[s2[1]]}",
                    "atom1": a.label(),
                    "atom2": b.label(),
                    "energy": float(e1 + e2),
                })
    return rows


def asymptotic_energies_vs_field(fields, model: PairInteraction | None = None) -> list[dict]:
    model = model or PairInteraction()
    out = []
    for b in fields:
        out.extend(asymptotic_energies(model, float(b)))
    return out


@dataclass
class CurveScan:
    dy: np.ndarray  # um
    Z: float
    field: float
    energies: np.ndarray  # (points, dim), MHz, columns are tracked curves
    overlaps: np.ndarray  # (points, dim)
    tracking_overlap: np.ndarray  # (points,), min matched |<prev|cur>|^2

    @property
    def R(self) -> np.ndarray:
        return np.hypot(self.Z, self.dy)

    @property
    def theta(self) -> np.ndarray:
        return np.arctan2(np.abs(self.dy), self.Z)


def scan_curves(model: PairInteraction, Z: float, dys, field: float) -> CurveScan:
    """Molecular curves along a transverse-offset scan, tracked by eigenvector overlap."""
    dys = np.asarray(dys, dtype=float)
    dim = len(model.basis)
    energies = np.zeros((len(dys), dim))
    overlaps = np.zeros((len(dys), dim))
    quality = np.ones(len(dys))
    prev = None
    for k, dy in enumerate(dys):
        spec = model.spectrum(Geometry.from_offset(Z, dy), field, keep_vectors=True)
        vecs = spec.vectors
        order = np.arange(dim)
        if prev is not None:
            ov = (prev.T @ vecs) ** 2
            rows, cols = linear_sum_assignment(-ov)
            order = cols[np.argsort(rows)]
            quality[k] = float(ov[np.arange(dim), order].min())
        energies[k] = spec.eigenvalues[order]
        overlaps[k] = spec.overlaps[order]
        prev = vecs[:, order]
    return CurveScan(dys, Z, field, energies, overlaps, quality)


def zero_crossings(scan: CurveScan, min_overlap: float = 0.0) -> list[dict]:
    """Points where a tracked curve crosses the laser-resonant line ``U = 0``.

    Position and overlap are linearly interpolated between the bracketing scan
    points. Curves whose overlap stays below ``min_overlap`` are skipped.
    """
    out = []
    E = scan.energies
    for c in range(E.shape[1]):
        e = E[:, c]
        for i in np.nonzero(e[:-1] * e[1:] < 0)[0]:
            w = e[i] / (e[i] - e[i + 1])
            kappa2 = (1 - w) * scan.overlaps[i, c] + w * scan.overlaps[i + 1, c]
            if kappa2 < min_overlap:
                continue
            out.append({
                "curve": int(c),
                "dy": float((1 - w) * scan.dy[i] + w * scan.dy[i + 1]),
                "kappa2": float(kappa2),
            })
    return sorted(out, key=lambda r: r["dy"])
