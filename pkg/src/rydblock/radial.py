"""Radial wavefunctions, dipole matrix elements and their persistent cache.

Wavefunctions solve the Coulomb radial equation at the quantum-defect energy,
integrated inward with Numerov's method on a grid uniform in ``x = sqrt(r)``.
With ``u(r) = x**0.5 * chi(x)`` the equation becomes

    chi'' = [8 x**2 (V - E) + (2l + 1/2)(2l + 3/2) / x**2] chi,  V = -1/x**2

in atomic units. All wavefunctions share the grid ``x_k = k * step`` so radial
integrals need no interpolation.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .atomdata import (
    AtomState,
    PhysicalConstants,
    QuantumDefectTable,
    effective_n,
)
from .errors import NumericalError, StaleCacheError
from .wigner import wigner_3j, wigner_6j

CACHE_FORMAT = "rydblock-radial-cache v1"


@dataclass(frozen=True)
class GridParams:
    step: float = 0.01  # in sqrt(bohr)
    r_floor: float = 1e-4  # bohr, innermost point ever integrated

    def digest(self) -> str:
        blob = json.dumps({"step": self.step, "r_floor": self.r_floor}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RadialWavefunction:
    state: AtomState
    first_index: int  # grid index of x[0]
    x: np.ndarray
    chi: np.ndarray
    norm_residual: float

    @property
    def grid(self) -> np.ndarray:
        """Radii in bohr."""
        return self.x**2

    @property
    def u(self) -> np.ndarray:
        return np.sqrt(self.x) * self.chi


def _numerov_inward(f: np.ndarray, step: float, start: float) -> np.ndarray:
    # y'' = f y, integrated from the last index towards index 0
    n = len(f)
    y = np.zeros(n)
    w = 1.0 - step * step * f / 12.0
    y[-1] = start
    y[-2] = start * (1.0 + step * math.sqrt(max(f[-1], 0.0)))
    for i in range(n - 2, 0, -1):
        y[i - 1] = (2.0 * y[i] * (1.0 + 5.0 * step * step * f[i] / 12.0) - w[i + 1] * y[i + 1]) / w[i - 1]
    return y


def radial_wavefunction(
    state: AtomState,
    table: QuantumDefectTable,
    consts: PhysicalConstants | None = None,
    grid: GridParams = GridParams(),
) -> RadialWavefunction:
    """Normalised reduced radial function ``u(r)`` of ``state``.

    Integration starts at ``r = 2n(n + 15)`` bohr and runs inward. Below the
    inner classical turning point it stops as soon as ``|u|`` starts growing
    again (the irregular solution taking over).
    """
    n_eff = effective_n(state.n, state.l, state.j, table)
    l = state.l
    if n_eff <= l:
        raise NumericalError(f"{state.label()}: n* = {n_eff:.4f} <= l, no bound region")
    energy = -0.5 / n_eff**2
    r_out = 2.0 * state.n * (state.n + 15)
    i_out = int(math.ceil(math.sqrt(r_out) / grid.step))
    i_in = max(1, int(math.floor(math.sqrt(grid.r_floor) / grid.step)))
    x = np.arange(i_in, i_out + 1) * grid.step
    f = 8.0 * x**2 * (-1.0 / x**2 - energy) + (2 * l + 0.5) * (2 * l + 1.5) / x**2
    chi = _numerov_inward(f, grid.step, 1e-12)
    if not np.all(np.isfinite(chi)):
        raise NumericalError(f"{state.label()}: Numerov integration overflowed")

    # inner turning point of l(l+1)/2r^2 - 1/r = E
    disc = 1.0 - l * (l + 1) / n_eff**2
    r_turn = n_eff**2 * (1.0 - math.sqrt(max(disc, 0.0)))
    u = np.sqrt(x) * chi
    cut = 0
    inside = np.nonzero(x**2 < r_turn)[0]
    if inside.size:
        head = u[: inside[-1] + 1]
        # the regular solution is nodeless and shrinks inward in the forbidden region
        au = np.abs(head)
        bad = np.nonzero((au[:-1] > au[1:]) | (head[:-1] * head[1:] <= 0))[0]
        if bad.size:
            cut = bad[-1] + 1
    x, chi = x[cut:], chi[cut:]
    outer_peak = 2.0 * n_eff**2
    if x[0] ** 2 > outer_peak:
        raise NumericalError(
            f"{state.label()}: integration diverged at r = {x[0] ** 2:.1f} bohr, "
            f"before the outer lobe at {outer_peak:.1f} bohr"
        )
    weight = 2.0 * x**2
    norm = _integrate(weight * chi * chi, grid.step)
    chi = chi / math.sqrt(norm)
    residual = abs(_integrate(weight * chi * chi, grid.step) - 1.0)
    return RadialWavefunction(state, i_in + cut, x, chi, residual)


def _integrate(values: np.ndarray, step: float) -> float:
    # endpoints are negligible at both ends; trapezoid is spectrally accurate here
    return float(np.sum(values) * step - 0.5 * step * (values[0] + values[-1]))


def radial_overlap_integral(a: RadialWavefunction, b: RadialWavefunction, power: int, step: float) -> float:
    """``int u_a u_b r**power dr`` on the shared grid."""
    lo = max(a.first_index, b.first_index)
    hi = min(a.first_index + len(a.x), b.first_index + len(b.x))
    if hi <= lo:
        return 0.0
    ca = a.chi[lo - a.first_index : hi - a.first_index]
    cb = b.chi[lo - b.first_index : hi - b.first_index]
    x = a.x[lo - a.first_index : hi - a.first_index]
    return _integrate(2.0 * x ** (2 * power + 2) * ca * cb, step)


def _level_key(state: AtomState) -> tuple:
    return (state.n, state.l, str(state.j))


class MatrixElementCache:
    """Radial dipole integrals keyed by unordered level pairs.

    The cache is bound to the defect-table hash and the grid parameters; a
    persisted file written under different hashes is refused on load.
    """

    def __init__(self, table: QuantumDefectTable, consts: PhysicalConstants | None = None,
                 grid: GridParams = GridParams(), enabled: bool = True):
        self.table = table
        self.consts = consts
        self.grid = grid
        self.enabled = enabled
        self._values: dict[tuple, float] = {}
        self._wavefunctions: dict[tuple, RadialWavefunction] = {}
        self._lock = threading.Lock()

    @property
    def table_hash(self) -> str:
        return self.table.content_hash[:16]

    @property
    def grid_hash(self) -> str:
        return self.grid.digest()

    def __len__(self) -> int:
        return len(self._values)

    def _wavefunction(self, state: AtomState) -> RadialWavefunction:
        key = _level_key(state)
        wf = self._wavefunctions.get(key) if self.enabled else None
        if wf is None:
            wf = radial_wavefunction(state, self.table, self.consts, self.grid)
            if self.enabled:
                self._wavefunctions[key] = wf
        return wf

    def radial(self, a: AtomState, b: AtomState) -> float:
        key = tuple(sorted((_level_key(a), _level_key(b))))
        if self.enabled and key in self._values:
            return self._values[key]
        value = radial_overlap_integral(self._wavefunction(a), self._wavefunction(b), 1, self.grid.step)
        if self.enabled:
            with self._lock:
                self._values[key] = value
        return value

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [
            f"# {CACHE_FORMAT}",
            f"# table_hash {self.table_hash}",
            f"# grid_hash {self.grid_hash}",
            "# n1 l1 j1 n2 l2 j2 radial_bohr",
        ]
        for (k1, k2), v in sorted(self._values.items()):
            lines.append(f"{k1[0]} {k1[1]} {k1[2]} {k2[0]} {k2[1]} {k2[2]} {v!r}")
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    def load(self, path, ignore_stale: bool = False) -> int:
        """Merge entries from ``path``; returns how many were read."""
        path = Path(path)
        if not path.exists():
            return 0
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != f"# {CACHE_FORMAT}":
            raise StaleCacheError(f"{path}: not a {CACHE_FORMAT} file")
        header = {}
        rows = []
        for line in lines[1:]:
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2:
                    header[parts[0]] = parts[1]
            elif line.strip():
                rows.append(line.split())
        stale = header.get("table_hash") != self.table_hash or header.get("grid_hash") != self.grid_hash
        if stale:
            if ignore_stale:
                return 0
            raise StaleCacheError(
                f"{path} was built with table {header.get('table_hash')} / grid "
                f"{header.get('grid_hash')}, current is {self.table_hash} / {self.grid_hash}"
            )
        for r in rows:
            k1 = (int(r[0]), int(r[1]), r[2])
            k2 = (int(r[3]), int(r[4]), r[5])
            self._values[tuple(sorted((k1, k2)))] = float(r[6])
        return len(rows)


def radial_dipole(a: AtomState, b: AtomState, cache: MatrixElementCache) -> float:
    """``<b|r|a>`` radial integral in bohr; 0 unless ``|l_a - l_b| == 1``."""
    if abs(a.l - b.l) != 1:
        return 0.0
    return cache.radial(a, b)


def reduced_dipole(a: AtomState, b: AtomState, cache: MatrixElementCache) -> float:
    """Reduced element ``<b||d||a>`` in the fine-structure basis (atomic units)."""
    if abs(a.l - b.l) != 1:
        return 0.0
    s = 0.5
    la, lb = a.l, b.l
    ang_l = (-1) ** lb * math.sqrt((2 * la + 1) * (2 * lb + 1)) * wigner_3j(lb, 1, la, 0, 0, 0)
    phase = (-1) ** round(lb + s + float(a.j) + 1)
    ang_j = phase * math.sqrt((2 * a.j + 1) * (2 * b.j + 1)) * wigner_6j(lb, b.j, s, a.j, la, 1)
    if ang_l == 0.0 or ang_j == 0.0:
        return 0.0
    return ang_l * ang_j * radial_dipole(a, b, cache)


def dipole_matrix_element(a: AtomState, b: AtomState, q: int, cache: MatrixElementCache) -> float:
    """Spherical component ``<b|d_q|a>`` in atomic units (e a0)."""
    if q not in (-1, 0, 1):
        raise ValueError("q must be -1, 0 or +1")
    if b.mj != a.mj + q or abs(a.l - b.l) != 1:
        return 0.0
    three = wigner_3j(b.j, 1, a.j, -b.mj, q, a.mj)
    if three == 0.0:
        return 0.0
    phase = (-1) ** round(float(b.j - b.mj))
    return phase * three * reduced_dipole(a, b, cache)
