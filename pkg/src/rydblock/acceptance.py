"""Acceptance checks for the reference configuration.

Each check returns a ``Check`` with the measured value, the accepted band and
a pass flag. ``run_all`` evaluates them in order, sharing one pair model so
matrix elements and spectra are computed once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .atomdata import AtomState, HALF, default_constants, default_table, level_energy
from .blockade import BlockadeCalculator, blockade_shift
from .expsim import (
    ExperimentConfig,
    crosstalk_probability,
    run_experiment,
    thermal_sigma,
    with_excitation_efficiency,
)
from .pairint import (
    DEFAULT_CHANNELS,
    Geometry,
    PairInteraction,
    build_pair_basis,
    c6_perturbative,
    scan_curves,
    zero_crossings,
)

Z_REF = 11.0  # um
SIGMA_Y_REF = 2.6  # um
FIELD_REF = 1.15  # mT
OMEGA_REF = 0.51  # MHz


@dataclass
class Check:
    number: int
    name: str
    value: object
    band: str
    passed: bool
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name}: {self.value} (accept {self.band}) [{self.seconds:.1f} s]"


class _Context:
    def __init__(self):
        self.model = PairInteraction()
        self.calc = BlockadeCalculator(self.model)


def _within(x, lo, hi) -> bool:
    return bool(lo <= x <= hi)


def check_basis(ctx) -> Check:
    dim = build_pair_basis(DEFAULT_CHANNELS).dimension
    return Check(1, "pair basis dimension", dim, "== 436", dim == 436)


def check_fine_structure(ctx) -> Check:
    t, c = default_table(), default_constants()
    split = level_energy(AtomState(79, 2, 2 + HALF, HALF), t, c) - level_energy(AtomState(79, 2, 2 - HALF, HALF), t, c)
    return Check(2, "79d fine-structure splitting (MHz)", round(split, 3), "23 +/- 15%",
                 _within(split, 23 * 0.85, 23 * 1.15))


def check_headline(ctx) -> Check:
    curve = ctx.calc.averaged(Z_REF, SIGMA_Y_REF, FIELD_REF, OMEGA_REF)
    ok = _within(curve.p2_mean, 0.039, 0.099) and _within(curve.shift_mean, 1.3 * 0.6, 1.3 * 1.4)
    return Check(3, "averaged P2 / blockade shift (MHz)",
                 f"{curve.p2_mean:.4f} / {curve.shift_mean:.3f}",
                 "P2 0.069 +/- 0.03, B 1.3 +/- 40%", ok, details=curve.summary())


def check_identity(ctx) -> Check:
    b = blockade_shift(0.069, OMEGA_REF)
    return Check(4, "blockade_shift(0.069, 0.51 MHz)", round(b, 4), "1.32 +/- 0.05", abs(b - 1.32) <= 0.05)


def check_crossing(ctx) -> Check:
    dys = np.round(np.arange(4.0, 6.0001, 0.05), 4)
    scan = scan_curves(ctx.model, Z_REF, dys, FIELD_REF)
    near = [c for c in zero_crossings(scan, 1e-8) if abs(c["dy"] - 4.9) < 0.5]
    if not near:
        return Check(5, "U=0 crossing overlap", "no crossing near 4.9 um", "3e-4 within x3", False)
    best = max(near, key=lambda c: c["kappa2"])
    k2 = best["kappa2"]
    p = {d: ctx.calc.p2(Z_REF, d, FIELD_REF, OMEGA_REF) for d in (best["dy"] - 0.5, best["dy"], best["dy"] + 0.5)}
    vals = list(p.values())
    bump = abs(vals[1] - 0.5 * (vals[0] + vals[2]))
    ok = _within(k2, 1e-4, 9e-4) and bump < 0.02
    return Check(5, "U=0 crossing overlap / P2 bump", f"{k2:.3g} at {best['dy']:.2f} um / {bump:.2g}",
                 "kappa2 3e-4 within x3, bump < 0.02", ok, details={"crossing": best})


def check_close_sites(ctx) -> Check:
    p2 = ctx.calc.averaged(7.0, SIGMA_Y_REF, FIELD_REF, OMEGA_REF).p2_mean
    return Check(6, "averaged P2 at Z = 7 um", f"{p2:.4g}", "0.007 within x2", _within(p2, 0.0035, 0.014))


def check_field_enhancement(ctx) -> Check:
    hi = ctx.calc.averaged(Z_REF, SIGMA_Y_REF, FIELD_REF, OMEGA_REF).shift_mean
    lo = ctx.calc.averaged(Z_REF, SIGMA_Y_REF, 0.0, OMEGA_REF).shift_mean
    return Check(7, "blockade shift 1.15 mT vs 0 mT (MHz)", f"{hi:.3f} vs {lo:.3f}", "first > second", hi > lo)


def check_thermal(ctx) -> Check:
    sz = thermal_sigma(12.3, 150.0)
    sy = thermal_sigma(139.0, 150.0)
    ok = abs(sz / 0.23 - 1) <= 0.1 and abs(sy / 2.6 - 1) <= 0.1
    return Check(8, "thermal spreads sigma_z / sigma_y (um)", f"{sz:.4f} / {sy:.4f}", "0.23 / 2.6 +/- 10%", ok)


def check_experiment(ctx, shots: int = 10_000) -> Check:
    config = with_excitation_efficiency(ExperimentConfig(shots=shots), 0.8)
    T = np.round(np.arange(0.0, 4.0001, 0.05), 4)
    fig2 = run_experiment(config, "fig2", T)
    retention = fig2.column("target", "mean_retention")
    exc = 1.0 - float(retention.min())
    back = run_experiment(config, "fig2", [2 * config.pi_time]).at(2 * config.pi_time, "target")["mean_retention"]
    fig3 = run_experiment(config, "fig3", [config.pi_time]).at(config.pi_time, "target")
    double = 1.0 - fig3["mean_retention"]
    ok = abs(double - 0.23) <= 0.05 and abs(exc - 0.80) <= 0.07 and back >= 0.93
    return Check(9, "fig3 double excitation / fig2 max excitation / 2pi return",
                 f"{double:.3f} / {exc:.3f} / {back:.3f}",
                 "0.23 +/- 0.05, 0.80 +/- 0.07, >= 0.93", ok,
                 details={"prep_error": config.prep_error, "shots": shots})


def check_crosstalk(ctx) -> Check:
    p = crosstalk_probability(OMEGA_REF, 0.019, 2.0)
    return Check(10, "crosstalk probability", f"{p:.3g}", "<= 1e-4", p <= 1e-4)


def c6_exponent(ns=(50, 60, 70, 79, 90)) -> tuple[float, list]:
    c6 = [abs(c6_perturbative(n, 0.0)) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(c6), 1)[0]
    return float(slope), c6


def check_scaling(ctx) -> Check:
    slope, c6 = c6_exponent()
    return Check(11, "C6 scaling exponent", f"{slope:.3f}", "11 +/- 1", abs(slope - 11) <= 1,
                 details={"c6_mhz_um6": c6})


def check_properties(ctx) -> Check:
    from .expsim import PulseSequence, ShotDisorder, evolve_two_atom
    from .pairint import diagonalize
    from .radial import MatrixElementCache, dipole_matrix_element, radial_dipole
    from .atomdata import QuantumDefectTable
    from .wigner import wigner_3j

    results = {}
    worst = 0.0
    for j1 in np.arange(0, 6.5, 0.5):
        for j2 in np.arange(0, 6.5, 0.5):
            for j3 in np.arange(abs(j1 - j2), j1 + j2 + 0.5, 1.0):
                if j3 > 6:
                    continue
                total = sum((2 * j3 + 1) * wigner_3j(j1, j2, j3, m1, m2, -m1 - m2) ** 2
                            for m1 in np.arange(-j1, j1 + 0.5) for m2 in np.arange(-j2, j2 + 0.5)
                            if abs(m1 + m2) <= j3)
                worst = max(worst, abs(total / ((2 * j3 + 1)) - 1.0))
    results["wigner_orthogonality"] = worst <= 1e-10

    hyd = MatrixElementCache(QuantumDefectTable.hydrogenic())
    r12 = radial_dipole(AtomState(1, 0, HALF, HALF), AtomState(2, 1, HALF, HALF), hyd)
    results["hydrogen_1s2p"] = abs(abs(r12) - 128 * math.sqrt(6) / 243) <= 1e-3

    cache = ctx.model.cache
    a, b = AtomState(79, 2, 2 + HALF, HALF), AtomState(80, 1, 1 + HALF, -HALF)
    herm = abs(dipole_matrix_element(a, b, -1, cache) - (-1) * dipole_matrix_element(b, a, 1, cache))
    results["dipole_hermiticity"] = herm <= 1e-12 * abs(dipole_matrix_element(a, b, -1, cache))

    spec = ctx.model.spectrum(Geometry.from_offset(Z_REF, 2.0), FIELD_REF)
    results["overlap_sum"] = abs(spec.overlaps.sum() - 1.0) <= 1e-10

    rng = np.random.default_rng(7)
    m = rng.normal(size=(50, 50)) + 1j * rng.normal(size=(50, 50))
    h = m + m.conj().T
    vals, vecs = diagonalize(h)
    results["reconstruction"] = np.abs(vecs @ np.diag(vals) @ vecs.conj().T - h).max() <= 1e-8 * np.abs(h).max()

    c6 = c6_perturbative(field=0.0, model=ctx.model)
    R = 20.0
    spec = ctx.model.spectrum(Geometry(R, 0.0), 0.0)
    shift = spec.eigenvalues[spec.dominant()]
    results["c6_vs_diagonalization"] = abs(shift / (c6 / R**6) - 1.0) <= 0.05

    config = ExperimentConfig(shots=200, seed=3)
    seq = PulseSequence.fig3(0.8, config.omega_mhz)
    probs = evolve_two_atom(seq, ShotDisorder.ideal(4), np.array([0.0, 0.5, 2.0, 50.0]), config)
    results["norm_conservation"] = np.abs(probs.sum(axis=1) - 1.0).max() <= 1e-9

    fixed = ExperimentConfig(shots=500, seed=11, blockade_mhz=2.0)
    r1 = run_experiment(fixed, "fig3", [0.5, 1.0]).rows
    r2 = run_experiment(fixed, "fig3", [0.5, 1.0], shards=3).rows
    results["seed_determinism"] = r1 == r2

    errs = []
    for n in (100, 1000, 10000):
        cfg = ExperimentConfig(shots=n, seed=5, blockade_mhz=2.0)
        errs.append(run_experiment(cfg, "fig2", [0.6]).rows[0]["stderr"] * math.sqrt(n))
    results["shot_noise_scaling"] = max(errs) / min(errs) <= 1.2

    failed = [k for k, v in results.items() if not v]
    return Check(12, "property suites", f"{len(results) - len(failed)}/{len(results)} hold",
                 "all hold", not failed, details={k: bool(v) for k, v in results.items()})


CHECKS = (
    check_basis,
    check_fine_structure,
    check_headline,
    check_identity,
    check_crossing,
    check_close_sites,
    check_field_enhancement,
    check_thermal,
    check_experiment,
    check_crosstalk,
    check_scaling,
    check_properties,
)


def run_all(only=None, report=print) -> list[Check]:
    ctx = _Context()
    out = []
    for number, fn in enumerate(CHECKS, start=1):
        if only and number not in only:
            continue
        t0 = time.perf_counter()
        check = fn(ctx)
        check.seconds = time.perf_counter() - t0
        out.append(check)
        if report:
            report(check.line())
    return out
