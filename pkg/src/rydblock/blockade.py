"""Double-excitation probability, effective blockade shift and thermal averaging."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError, RydblockError
from .pairint import Geometry, MolecularSpectrum, PairInteraction


class InfiniteShiftError(RydblockError, ZeroDivisionError):
    """Raised by ``blockade_shift`` for P2 = 0, where the shift is unbounded."""


def p2_from_spectrum(spec: MolecularSpectrum, omega: float) -> float:
    """``sum_phi omega^2 kappa^2 / (omega^2 + 2 Delta^2)``.

    ``omega`` is the Rabi frequency over 2 pi in MHz, matching the MHz
    eigenvalues of the spectrum.
    """
    if omega <= 0:
        raise ConfigurationError("Rabi frequency must be > 0")
    om2 = omega * omega
    value = float(np.sum(om2 * spec.overlaps / (om2 + 2.0 * spec.eigenvalues**2)))
    return min(max(value, 0.0), 1.0)


def p2_from_shift(shift: float, omega: float) -> float:
    """Two-level form ``omega^2 / (omega^2 + 2 B^2)``."""
    return omega * omega / (omega * omega + 2.0 * shift * shift)


def blockade_shift(p2: float, omega: float) -> float:
    """Effective blockade shift (MHz) that reproduces ``p2`` in the two-level form."""
    if omega <= 0:
        raise ConfigurationError("Rabi frequency must be > 0")
    if p2 == 0:
        raise InfiniteShiftError("P2 = 0 corresponds to an infinite blockade shift")
    if not 0 < p2 <= 1:
        raise ConfigurationError(f"P2 = {p2} outside (0, 1]")
    return omega * math.sqrt((1.0 - p2) / (2.0 * p2))


@dataclass
class BlockadeCurve:
    dy: np.ndarray  # um
    p2: np.ndarray
    shift: np.ndarray  # MHz, inf where P2 underflows to 0
    p2_mean: float
    shift_mean: float
    rabi: float  # MHz
    field: float  # mT
    Z: float  # um
    sigma_y: float  # um
    sigma_z: float = 0.0
    nodes: int = 0
    convergence: float = 0.0  # relative change of the mean under node doubling

    def summary(self) -> dict:
        return {
            "p2_mean": self.p2_mean,
            "blockade_shift_mean_mhz": self.shift_mean,
            "rabi_mhz": self.rabi,
            "field_mt": self.field,
            "Z_um": self.Z,
            "sigma_y_um": self.sigma_y,
            "sigma_z_um": self.sigma_z,
            "quadrature_nodes": self.nodes,
            "quadrature_relative_change": self.convergence,
        }


def _safe_shift(p2: float, omega: float) -> float:
    try:
        return blockade_shift(p2, omega)
    except InfiniteShiftError:
        return math.inf


class BlockadeCalculator:
    """P2 at arbitrary site geometry, memoised on ``(Z, |dy|, field)``."""

    def __init__(self, model: PairInteraction | None = None, workers: int = 1):
        self.model = model or PairInteraction()
        self.workers = workers
        self._memo: dict = {}

    def p2(self, Z: float, dy: float, field: float, omega: float) -> float:
        key = (round(Z, 12), round(abs(dy), 12), float(field), float(omega))
        if key not in self._memo:
            spec = self.model.spectrum(Geometry.from_offset(Z, dy), field)
            self._memo[key] = p2_from_spectrum(spec, omega)
        return self._memo[key]

    def p2_many(self, Zs, dys, field: float, omega: float) -> np.ndarray:
        pts = list(zip(np.broadcast_to(Zs, np.shape(dys)).ravel(), np.ravel(dys)))
        if self.workers > 1:
            # eigh releases the GIL; map() keeps the order fixed
            with ThreadPoolExecutor(self.workers) as pool:
                vals = list(pool.map(lambda p: self.p2(p[0], p[1], field, omega), pts))
        else:
            vals = [self.p2(z, d, field, omega) for z, d in pts]
        return np.array(vals).reshape(np.shape(dys))

    def _mean(self, Z, sigma_y, sigma_z, field, omega, nodes, z_nodes) -> float:
        x, w = np.polynomial.hermite.hermgauss(nodes)
        w = w / math.sqrt(math.pi)
        # y1 - y2 has variance 2 sigma_y^2, so dy = sqrt(2) * (sqrt(2) sigma_y) * x
        dy = 2.0 * sigma_y * x
        if sigma_z > 0:
            xz, wz = np.polynomial.hermite.hermgauss(z_nodes)
            wz = wz / math.sqrt(math.pi)
            Zs = Z + 2.0 * sigma_z * xz
            if np.any(Zs <= 0):
                raise ConfigurationError("sigma_z too large for the site separation")
            grid = self.p2_many(Zs[:, None], np.broadcast_to(dy, (z_nodes, nodes)), field, omega)
            return float(wz @ grid @ w)
        vals = self.p2_many(Z, dy, field, omega)
        return float(w @ vals)

    def averaged(
        self,
        Z: float,
        sigma_y: float,
        field: float,
        omega: float,
        nodes: int = 40,
        sigma_z: float = 0.0,
        z_nodes: int = 8,
        dy_samples=None,
        rtol: float = 0.01,
        max_nodes: int = 640,
    ) -> BlockadeCurve:
        """Average P2 over the transverse offset, doubling the node count until
        two successive rules agree within ``rtol`` or ``max_nodes`` is passed."""
        if Z <= 0:
            raise ConfigurationError("site separation Z must be > 0")
        if sigma_y < 0 or sigma_z < 0:
            raise ConfigurationError("position spreads must be >= 0")
        if nodes < 40:
            raise ConfigurationError("at least 40 Gauss-Hermite nodes are required")
        used = 0
        if sigma_y == 0 and sigma_z == 0:
            mean = self.p2(Z, 0.0, field, omega)
            change = 0.0
        else:
            history = []
            coarse = self._mean(Z, sigma_y, sigma_z, field, omega, nodes, z_nodes)
            while True:
                nodes, z_nodes = 2 * nodes, min(2 * z_nodes, 32)
                mean = self._mean(Z, sigma_y, sigma_z, field, omega, nodes, z_nodes)
                change = abs(mean - coarse) / max(abs(mean), 1e-300)
                history.append(f"{nodes // 2} -> {coarse:.6g}, {nodes} -> {mean:.6g}")
                if change <= rtol:
                    break
                if 2 * nodes > max_nodes:
                    raise NumericalError(
                        "Gauss-Hermite average not converged: " + "; ".join(history)
                        + f" (last relative change {change:.3g})"
                    )
                coarse = mean
            used = nodes
        if dy_samples is None:
            dy_samples = np.round(np.arange(0.0, 12.0 + 1e-9, 0.1), 10)
        dy_samples = np.asarray(dy_samples, dtype=float)
        p2 = self.p2_many(Z, dy_samples, field, omega)
        shift = np.array([_safe_shift(p, omega) for p in p2])
        return BlockadeCurve(
            dy=dy_samples,
            p2=p2,
            shift=shift,
            p2_mean=mean,
            shift_mean=_safe_shift(mean, omega),
            rabi=omega,
            field=field,
            Z=Z,
            sigma_y=sigma_y,
            sigma_z=sigma_z,
            nodes=used,
            convergence=change,
        )

    def shift_table(self, Z: float, field: float, omega: float, dy_max: float = 20.0, step: float = 0.25):
        """``(|dy|, B)`` samples for interpolation in the experiment simulation."""
        dys = np.arange(0.0, dy_max + 1e-9, step)
        p2 = self.p2_many(Z, dys, field, omega)
        return dys, np.array([_safe_shift(p, omega) for p in p2])


def averaged_blockade(
    Z: float,
    sigma_y: float,
    field: float,
    omega: float,
    model: PairInteraction | None = None,
    **kwargs,
) -> BlockadeCurve:
    """Gaussian-averaged P2 over ``y1 - y2 ~ N(0, 2 sigma_y^2)`` and the shift it implies."""
    return BlockadeCalculator(model).averaged(Z, sigma_y, field, omega, **kwargs)
