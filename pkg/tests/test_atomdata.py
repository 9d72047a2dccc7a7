import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq
from sympy import Rational
from sympy.physics.wigner import clebsch_gordan as sym_cg

from rydblock.atomdata import (
    HALF,
    AtomState,
    QuantumDefectTable,
    laser_excited_state,
    level_energy,
    shell_states,
    zeeman_hamiltonian,
)
from rydblock.errors import AmbiguityError, ConfigurationError, InvariantError

# 87Rb Rydberg constant in cm^-1 from microwave spectroscopy (Mack et al. 2011)
RB87_RYDBERG_CM = 109736.62301
SPEED_OF_LIGHT_CM = 2.99792458e10


def d_states(n=79):
    return shell_states(n, 2)


# constants and defect table

def test_constants_positive_and_reduced_mass(consts):
    for name in ("rydberg_frequency", "bohr_radius", "bohr_magneton_over_h", "electron_g_factor",
                 "orbital_g_factor", "hartree_frequency", "atom_mass", "boltzmann_over_h"):
        assert getattr(consts, name) > 0
    ratio = consts.rydberg_frequency / (consts.hartree_frequency / 2)
    assert 1 - 1e-4 < ratio < 1.0


def test_rydberg_frequency_matches_rb87_literature(consts):
    expected = RB87_RYDBERG_CM * SPEED_OF_LIGHT_CM * 1e-6
    assert consts.rydberg_frequency == pytest.approx(expected, rel=1e-8)


def test_constants_pinned_version(consts):
    assert consts.codata_version == "CODATA 2018"
    assert len(consts.source_hash) == 64


def test_table_required_channels(table):
    for key in [(0, HALF), (1, HALF), (1, 3 * HALF), (2, 3 * HALF), (2, 5 * HALF), (3, 5 * HALF), (3, 7 * HALF)]:
        assert key in table.channels
        assert table.channels[key].citation


def test_table_defects_decrease_with_l(table):
    by_l = {}
    for (l, _), ch in table.channels.items():
        by_l.setdefault(l, []).append(ch.delta0)
    for l in range(3):
        assert min(by_l[l]) > max(by_l[l + 1])
    assert max(by_l[3]) < 0.1


def test_missing_channel_names_it():
    t = QuantumDefectTable.from_text("s1/2 0 1/2 3.13 0.18 14 130 test")
    with pytest.raises(ConfigurationError, match="p1/2"):
        t.defect(50, 1, HALF)


def test_high_l_has_zero_defect(table):
    assert table.defect(79, 4, 4 + HALF) == 0.0
    assert table.defect(79, 6, 6 - HALF) == 0.0


def test_table_parse_errors_and_hash():
    with pytest.raises(ConfigurationError):
        QuantumDefectTable.from_text("s1/2 0 1/2 3.13")
    a = QuantumDefectTable.from_text("s1/2 0 1/2 3.13 0.18 14 130 x")
    b = QuantumDefectTable.from_text("s1/2 0 1/2 3.14 0.18 14 130 x")
    assert a.content_hash != b.content_hash


# states

@pytest.mark.parametrize("args", [(5, 5, 5.5, 0.5), (79, 2, 0.5, 0.5), (79, 2, 2.5, 3.5), (79, 0, 0.5, 0)])
def test_atomstate_rejects_invalid(args):
    with pytest.raises(InvariantError):
        AtomState(*args)


def test_shell_counts():
    assert len(shell_states(79, 0)) == 2
    assert len(shell_states(79, 1)) == 6
    assert len(shell_states(79, 2)) == 10
    assert len(shell_states(79, 3)) == 14


# energies

def test_hydrogenic_level(consts):
    t = QuantumDefectTable.hydrogenic()
    e = level_energy(AtomState(79, 2, 2.5, 0.5), t, consts)
    assert e == consts.rydberg_frequency * -1 / 79**2


def test_fine_structure_splitting(table, consts):
    split = level_energy(AtomState(79, 2, 2.5, 0.5), table, consts) - level_energy(AtomState(79, 2, 1.5, 0.5), table, consts)
    assert split == pytest.approx(23.0, rel=0.15)


def test_forster_defects(table, consts):
    def e(n, l, j):
        return level_energy(AtomState(n, l, j, 0.5), table, consts)

    d79 = e(79, 2, 2.5)
    spacing = abs(d79 - e(78, 2, 2.5))
    ry = consts.rydberg_frequency

    def ritz(n, d0, d2):
        delta = d0 + d2 / (n - d0) ** 2
        return -ry / (n - delta) ** 2

    # oracle: the Rydberg-Ritz formula evaluated directly from the table rows
    oracle = ritz(81, 2.6548849, 0.2900) + ritz(77, 0.0165192, -0.085) - 2 * ritz(79, 1.34646572, -0.59600)
    nearest = e(81, 1, 0.5) + e(77, 3, 2.5) - 2 * d79
    assert nearest == pytest.approx(oracle, rel=1e-9)
    assert abs(nearest) < 100
    defects = [e(n1, 1, jp) + e(n2, 3, jf) - 2 * d79
               for n1, n2 in ((80, 78), (81, 77)) for jp in (0.5, 1.5) for jf in (2.5, 3.5)]
    assert min(map(abs, defects)) == pytest.approx(abs(nearest), rel=0.01)
    # every channel is nearly degenerate on the scale of the nd level spacing
    assert max(map(abs, defects)) < 0.05 * spacing


@given(st.integers(min_value=14, max_value=129), st.sampled_from([(0, 0.5), (1, 0.5), (1, 1.5), (2, 1.5), (2, 2.5), (3, 2.5), (3, 3.5)]))
def test_energy_increases_with_n(n, lj):
    from rydblock.atomdata import default_constants, default_table

    l, j = lj
    t, c = default_table(), default_constants()
    assert level_energy(AtomState(n + 1, l, j, 0.5), t, c) > level_energy(AtomState(n, l, j, 0.5), t, c)


# Zeeman Hamiltonian

def _uncoupled_oracle(n, l, field, table, consts):
    """Fine structure plus Zeeman built in |m_l, m_s> with sympy Clebsch-Gordan projectors."""
    basis = [(ml, ms) for ml in range(-l, l + 1) for ms in (Rational(-1, 2), Rational(1, 2))]
    size = len(basis)
    h = np.zeros((size, size))
    for i, (ml, ms) in enumerate(basis):
        h[i, i] = consts.bohr_magneton_over_h * field * (consts.orbital_g_factor * ml + consts.electron_g_factor * float(ms))
    for j in (Rational(2 * l - 1, 2), Rational(2 * l + 1, 2)):
        e = level_energy(AtomState(n, l, Fraction(int(2 * j), 2), HALF), table, consts)
        m = -j
        while m <= j:
            v = np.array([float(sym_cg(l, Rational(1, 2), j, ml, ms, m)) for ml, ms in basis])
            h += e * np.outer(v, v)
            m += 1
    return h


@pytest.mark.parametrize("field", [0.0, 0.3, 1.15, 5.0])
def test_zeeman_eigenvalues_match_uncoupled_oracle(field, table, consts):
    ours = np.linalg.eigvalsh(zeeman_hamiltonian(d_states(), field, table, consts))
    oracle = np.linalg.eigvalsh(_uncoupled_oracle(79, 2, field, table, consts))
    assert np.allclose(ours, oracle, atol=1e-6, rtol=0)


def test_zeeman_zero_field_diagonal(table, consts):
    states = d_states()
    h = zeeman_hamiltonian(states, 0.0, table, consts)
    assert np.array_equal(h, np.diag(np.diag(h)))
    assert np.allclose(np.diag(h), [level_energy(s, table, consts) for s in states], rtol=1e-15)


def test_stretched_state_slope(table, consts):
    states = d_states()
    i = states.index(AtomState(79, 2, 2.5, 2.5))
    h0 = zeeman_hamiltonian(states, 0.0, table, consts)
    h1 = zeeman_hamiltonian(states, 1.0, table, consts)
    slope = h1[i, i] - h0[i, i]
    expected = consts.bohr_magneton_over_h * (consts.orbital_g_factor * 2 + consts.electron_g_factor / 2)
    assert slope == pytest.approx(expected, rel=1e-12)
    assert np.count_nonzero(h1[i]) == 1


@given(st.floats(min_value=0.0, max_value=50.0))
def test_zeeman_structure(field):
    from rydblock.atomdata import default_constants, default_table

    t, c = default_table(), default_constants()
    states = d_states()
    h = zeeman_hamiltonian(states, field, t, c)
    assert np.array_equal(h, h.T)
    for a, sa in enumerate(states):
        for b, sb in enumerate(states):
            if sa.mj != sb.mj:
                assert h[a, b] == 0.0
    assert np.trace(h) == pytest.approx(np.linalg.eigvalsh(h).sum(), rel=1e-12)


def test_zeeman_continuous_in_field(table, consts):
    fields = np.linspace(0, 3, 301)
    vals = np.array([np.linalg.eigvalsh(zeeman_hamiltonian(d_states(), b, table, consts)) for b in fields])
    # slope bound: |dE/dB| <= mu_B (g_L l + g_S s) for every level
    bound = consts.bohr_magneton_over_h * (2 * 1 + 2.0024 * 0.5)
    assert np.abs(np.diff(vals, axis=0)).max() <= bound * (fields[1] - fields[0]) * 1.0001


def test_zeeman_rejects_mixed_and_negative(table, consts):
    with pytest.raises(InvariantError):
        zeeman_hamiltonian(d_states() + shell_states(80, 1), 0.1, table, consts)
    with pytest.raises(ConfigurationError):
        zeeman_hamiltonian(d_states(), -0.1, table, consts)


# laser-excited state

def test_dressed_zero_field(table, consts):
    r = laser_excited_state(79, 0.0, table, consts)
    target = AtomState(79, 2, 2.5, 0.5)
    assert r.overlap(target) == 1.0
    assert np.count_nonzero(r.amplitudes) == 1


def test_dressed_admixture_at_bias_field(table, consts):
    r = laser_excited_state(79, 1.15, table, consts)
    norm = float(np.sum(r.amplitudes**2))
    assert norm == pytest.approx(1.0, abs=1e-12)
    admix = r.overlap(AtomState(79, 2, 1.5, 0.5)) ** 2
    assert admix > 0.01
    # only the m_j = 1/2 block is populated
    for s, a in zip(r.states, r.amplitudes):
        if s.mj != HALF:
            assert a == 0.0
    # two-level oracle: mixing angle of the m_j = 1/2 pair from the uncoupled build
    h = _uncoupled_oracle(79, 2, 1.15, table, consts)
    vals, vecs = np.linalg.eigh(h)
    v52 = np.array([float(sym_cg(2, Rational(1, 2), Rational(5, 2), ml, ms, Rational(1, 2)))
                    for ml in range(-2, 3) for ms in (Rational(-1, 2), Rational(1, 2))])
    v32 = np.array([float(sym_cg(2, Rational(1, 2), Rational(3, 2), ml, ms, Rational(1, 2)))
                    for ml in range(-2, 3) for ms in (Rational(-1, 2), Rational(1, 2))])
    k = int(np.argmax((vecs.T @ v52) ** 2))
    assert admix == pytest.approx(float((vecs[:, k] @ v32) ** 2), rel=1e-8)
    assert r.energy + level_energy(AtomState(79, 2, 2.5, 0.5), table, consts) == pytest.approx(vals[k], abs=1e-6)


def test_dressed_admixture_perturbative_limit(table, consts):
    # first-order admixture amplitude V / (E_5/2 - E_3/2 + diagonal Zeeman difference)
    field = 0.02
    r = laser_excited_state(79, field, table, consts)
    states = d_states()
    h = zeeman_hamiltonian(states, field, table, consts)
    i5 = states.index(AtomState(79, 2, 2.5, 0.5))
    i3 = states.index(AtomState(79, 2, 1.5, 0.5))
    amp = h[i3, i5] / (h[i5, i5] - h[i3, i3])
    assert r.overlap(states[i3]) == pytest.approx(amp, rel=1e-3)


def test_dressed_paschen_back_limit(table, consts):
    # at 100 mT the Zeeman energy (~1.4 GHz) dwarfs the 23 MHz fine structure;
    # |d5/2, 1/2> has weight 3/5 on |m_l=0, up> and 2/5 on |m_l=1, down>
    r = laser_excited_state(79, 100.0, table, consts)
    c5 = math.sqrt(3 / 5)
    c3 = -math.sqrt(2 / 5)  # <d3/2 1/2 | m_l=0, m_s=+1/2>
    product = c5 * r.overlap(AtomState(79, 2, 2.5, 0.5)) + c3 * r.overlap(AtomState(79, 2, 1.5, 0.5))
    assert product**2 > 0.999


def test_dressed_ambiguity_raises(consts):
    # tune the d3/2 defect so the m_j = 1/2 diagonal entries coincide at 1 mT:
    # the two dressed states then hold |d5/2, 1/2> with equal weight
    field = 1.0
    n = 79
    states = shell_states(n, 2)
    i5 = states.index(AtomState(n, 2, 2.5, 0.5))
    i3 = states.index(AtomState(n, 2, 1.5, 0.5))
    base = "d5/2 2 5/2 1.34646572 0 1 200 test\n"

    def table_for(d0):
        return QuantumDefectTable.from_text(base + f"d3/2 2 3/2 {d0!r} 0 1 200 test\n")

    def gap(d0):
        h = zeeman_hamiltonian(states, field, table_for(d0), consts)
        return h[i5, i5] - h[i3, i3]

    d0 = brentq(gap, 1.3, 1.4, xtol=1e-15)
    with pytest.raises(AmbiguityError):
        laser_excited_state(n, field, table_for(d0), consts)
