import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from rydblock.atomdata import AtomState, level_energy
from rydblock.errors import InvariantError
from rydblock.pairint import (
    DEFAULT_CHANNELS,
    Geometry,
    PairInteraction,
    PairState,
    asymptotic_energies,
    asymptotic_energies_vs_field,
    build_pair_basis,
    c6_perturbative,
    diagonalize,
    dipole_dipole_element,
    forster_channels,
    scan_curves,
    zero_crossings,
)
from rydblock.radial import dipole_matrix_element


def S(n, l, j, m):
    return AtomState(n, l, j, m)


# basis

def test_basis_dimension_436():
    basis = build_pair_basis(DEFAULT_CHANNELS)
    assert basis.dimension == 10 * 10 + 2 * (6 * 14) + 2 * (6 * 14) == 436
    assert len(set(basis.states)) == 436


def test_single_shell_and_empty():
    assert build_pair_basis([((79, 2), (79, 2))]).dimension == 100
    assert build_pair_basis([]).dimension == 0


def test_duplicate_shell_rejected():
    with pytest.raises(InvariantError):
        build_pair_basis([((79, 2), (79, 2)), ((79, 2), (79, 2))])


def test_enumeration_order():
    basis = build_pair_basis(DEFAULT_CHANNELS)
    first = basis.states[:100]
    keys = [(float(s.a.j), float(s.a.mj), float(s.b.j), float(s.b.mj)) for s in first]
    assert keys == sorted(keys)
    assert basis.states[100] == PairState(S(80, 1, 0.5, -0.5), S(78, 3, 2.5, -2.5))
    assert [c for c in basis.channels] == [tuple(c) for c in DEFAULT_CHANNELS]


def test_empty_basis_model_rejected():
    with pytest.raises(InvariantError):
        PairInteraction(build_pair_basis([]))


# geometry

def test_geometry_from_offset():
    g = Geometry.from_offset(11.0, -4.0)
    assert g.R == pytest.approx(math.hypot(11, 4))
    assert g.theta == pytest.approx(math.atan(4 / 11))
    with pytest.raises(InvariantError):
        Geometry(1.0, -0.1)


def test_zero_distance_rejected(model):
    s = model.basis.states[0]
    with pytest.raises(InvariantError):
        dipole_dipole_element(s, s, Geometry(0.0, 0.0), model.cache, model.consts)
    with pytest.raises(InvariantError):
        model.interaction(Geometry(0.0, 0.0))


# dipole-dipole operator

def _cartesian(t_state, s_state, cache):
    """Cartesian components <s|d_i|t> from the spherical ones."""
    dm = {q: dipole_matrix_element(t_state, s_state, q, cache) for q in (-1, 0, 1)}
    return np.array([
        (dm[-1] - dm[1]) / math.sqrt(2),
        1j * (dm[-1] + dm[1]) / math.sqrt(2),
        dm[0],
    ])


def _cartesian_oracle(s, t, geom, cache, consts):
    n = np.array([math.sin(geom.theta), 0.0, math.cos(geom.theta)])
    d1 = _cartesian(t.a, s.a, cache)
    d2 = _cartesian(t.b, s.b, cache)
    value = d1 @ d2 - 3 * (d1 @ n) * (d2 @ n)
    R = geom.R / consts.bohr_radius
    return value * consts.hartree_frequency / R**3


@given(st.integers(0, 435), st.integers(0, 435), st.floats(0, math.pi), st.floats(3.0, 30.0))
def test_dipole_dipole_matches_cartesian_oracle(i, k, theta, R):
    model = _shared_model()
    s, t = model.basis.states[i], model.basis.states[k]
    geom = Geometry(R, theta)
    ours = dipole_dipole_element(s, t, geom, model.cache, model.consts)
    oracle = _cartesian_oracle(s, t, geom, model.cache, model.consts)
    assert abs(oracle.imag) < 1e-12 * max(abs(oracle), 1e-300)
    assert ours == pytest.approx(oracle.real, rel=1e-11, abs=1e-15)


_MODEL = []


def _shared_model():
    if not _MODEL:
        _MODEL.append(PairInteraction())
    return _MODEL[0]


def test_matrix_assembly_matches_elementwise(model):
    geom = Geometry(9.0, 0.7)
    v = model.interaction(geom)
    rng = np.random.default_rng(1)
    for i, k in rng.integers(0, 436, size=(200, 2)):
        s, t = model.basis.states[i], model.basis.states[k]
        assert v[i, k] == pytest.approx(dipole_dipole_element(s, t, geom, model.cache, model.consts), rel=1e-12, abs=1e-15)


def test_theta_zero_reduction(model):
    geom = Geometry(11.0, 0.0)
    v = model.interaction(geom)
    prods = model.dipole_products
    scale = model.consts.hartree_frequency / (11.0 / model.consts.bohr_radius) ** 3
    expected = scale * (-2 * prods[(0, 0)] - prods[(1, -1)] - prods[(-1, 1)])
    assert np.allclose(v, expected, rtol=1e-13, atol=0)


def test_r_cubed_law(model):
    v1 = model.interaction(Geometry(7.0, 0.4))
    v2 = model.interaction(Geometry(14.0, 0.4))
    nz = v1 != 0
    assert np.allclose(v1[nz] / v2[nz], 8.0, rtol=1e-13)


def test_selection_rule_delta_m(model):
    v = model.interaction(Geometry(8.0, 1.0))
    m = np.array([float(s.total_m) for s in model.basis.states])
    dm = np.abs(m[:, None] - m[None, :])
    assert np.all(v[dm > 2] == 0)


def test_hand_composed_forster_element(model):
    # <80p3/2 1/2, 78f5/2 1/2 | V | 79d5/2 1/2, 79d5/2 1/2> at R = 11 um, theta = 0:
    # only the -2 d1_0 d2_0 term connects these states
    from sympy import Rational
    from sympy.physics.wigner import wigner_3j as w3, wigner_6j as w6

    def element(a, b):
        # <b|d_0|a> with sympy angular factors and the module's radial integral
        la, lb, ja, jb = a.l, b.l, Rational(int(2 * a.j), 2), Rational(int(2 * b.j), 2)
        s = Rational(1, 2)
        red_l = (-1) ** lb * math.sqrt((2 * la + 1) * (2 * lb + 1)) * float(w3(lb, 1, la, 0, 0, 0))
        red_j = (-1) ** int(lb + s + ja + 1) * math.sqrt(float((2 * ja + 1) * (2 * jb + 1))) * float(w6(lb, jb, s, ja, la, 1))
        mj = Rational(1, 2)
        ang = (-1) ** int(jb - mj) * float(w3(jb, 1, ja, -mj, 0, mj))
        return ang * red_j * red_l * model.cache.radial(a, b)

    d = S(79, 2, 2.5, 0.5)
    p, f = S(80, 1, 1.5, 0.5), S(78, 3, 2.5, 0.5)
    c = model.consts
    expected = -2 * element(d, p) * element(d, f) * c.hartree_frequency / (11.0 / c.bohr_radius) ** 3
    ours = dipole_dipole_element(PairState(p, f), PairState(d, d), Geometry(11.0, 0.0), model.cache, c)
    assert ours == pytest.approx(expected, rel=1e-10)
    assert ours != 0.0


# Hamiltonian

def test_hamiltonian_hermitian(model):
    geom = Geometry.from_offset(11.0, 3.3)
    v = model.interaction(geom)
    h0 = model.unperturbed(1.15)
    scale = np.abs(v).max()
    assert np.abs(v - v.T).max() <= 1e-12 * scale
    assert np.abs(h0 - h0.T).max() <= 1e-12 * np.abs(h0).max()
    h = model.hamiltonian(geom, 1.15)
    assert h.shape == (436, 436)


def test_far_field_zero_field_diagonal(model, table, consts):
    h = model.hamiltonian(Geometry(1e6, 0.3), 0.0)
    off = h - np.diag(np.diag(h))
    assert np.abs(off).max() < 1e-6
    ref = 2 * level_energy(S(79, 2, 2.5, 0.5), table, consts)
    sums = [level_energy(s.a, table, consts) + level_energy(s.b, table, consts) - ref for s in model.basis.states]
    assert np.allclose(np.sort(np.linalg.eigvalsh(h)), np.sort(sums), atol=1e-6)


def test_theta_zero_block_structure(model):
    h = model.hamiltonian(Geometry(6.0, 0.0), 1.15)
    m = np.array([float(s.total_m) for s in model.basis.states])
    assert np.all(h[m[:, None] != m[None, :]] == 0.0)
    # permuting to total-M blocks leaves a block-diagonal matrix with the same spectrum
    order = np.argsort(m, kind="stable")
    hp = h[np.ix_(order, order)]
    blocks = [np.nonzero(m[order] == mm)[0] for mm in np.unique(m)]
    vals = np.concatenate([np.linalg.eigvalsh(hp[np.ix_(b, b)]) for b in blocks])
    assert np.allclose(np.sort(vals), np.linalg.eigvalsh(h), atol=1e-9)


@pytest.mark.parametrize("theta", [0.0, 0.4])
def test_exchange_symmetry(model, theta):
    basis = model.basis
    perm = np.array([basis.index[PairState(s.b, s.a)] for s in basis.states])
    h = model.hamiltonian(Geometry(9.0, theta), 1.15)
    assert np.allclose(h[np.ix_(perm, perm)], h, atol=1e-12)
    a = np.linalg.eigvalsh(h)
    b = np.linalg.eigvalsh(h[np.ix_(perm, perm)])
    assert np.abs(a - b).max() < 1e-9


# diagonalisation

def test_diagonalize_diagonal():
    vals, vecs = diagonalize(np.diag([3.0, -1.0, 2.0]))
    assert np.allclose(vals, [-1, 2, 3])
    assert np.allclose(np.abs(vecs), np.eye(3)[:, [1, 2, 0]])


@given(st.floats(-50, 50), st.floats(-20, 20))
def test_diagonalize_two_by_two(delta, v):
    vals, _ = diagonalize(np.array([[0.0, v], [v, delta]]))
    root = math.sqrt(delta**2 + 4 * v**2)
    assert vals[0] == pytest.approx((delta - root) / 2, abs=1e-12)
    assert vals[1] == pytest.approx((delta + root) / 2, abs=1e-12)


def test_diagonalize_random_hermitian_reconstruction():
    rng = np.random.default_rng(42)
    m = rng.normal(size=(50, 50)) + 1j * rng.normal(size=(50, 50))
    h = m + m.conj().T
    vals, vecs = diagonalize(h)
    assert np.abs(vecs @ np.diag(vals) @ vecs.conj().T - h).max() <= 1e-8 * np.abs(h).max()
    assert np.allclose(vecs.conj().T @ vecs, np.eye(50), atol=1e-12)
    assert np.all(np.diff(vals) >= 0)
    big = np.argmax(np.abs(vecs), axis=0)
    pivots = vecs[big, np.arange(50)]
    assert np.allclose(pivots.imag, 0) and np.all(pivots.real > 0)


def test_diagonalize_rejects_non_hermitian():
    with pytest.raises(InvariantError):
        diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_diagonalize_deterministic(model):
    h = model.hamiltonian(Geometry(11.0, 0.3), 1.15)
    a = diagonalize(h)
    b = diagonalize(h.copy())
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# spectra

@pytest.mark.parametrize("dy,field", [(0.0, 1.15), (2.0, 1.15), (4.9, 1.15), (3.0, 0.0)])
def test_spectrum_overlaps(model, dy, field):
    spec = model.spectrum(Geometry.from_offset(11.0, dy), field)
    assert len(spec.eigenvalues) == 436
    assert abs(spec.overlaps.sum() - 1.0) <= 1e-10
    assert np.all(spec.overlaps >= 0)


def test_spectrum_non_interacting_limit(model):
    spec = model.spectrum(Geometry(1e6, 0.3), 1.15)
    k = spec.dominant()
    assert spec.overlaps[k] == pytest.approx(1.0, abs=1e-9)
    assert abs(spec.eigenvalues[k]) < 1e-9
    assert np.sort(spec.overlaps)[-2] < 1e-9


def test_rr_vector_normalised(model):
    rr, _ = model.rr_vector(1.15)
    assert np.linalg.norm(rr) == pytest.approx(1.0, abs=1e-12)


def test_crossing_near_4p9(model):
    dys = np.round(np.arange(4.5, 5.3001, 0.05), 4)
    scan = scan_curves(model, 11.0, dys, 1.15)
    hits = [c for c in zero_crossings(scan, 1e-8) if abs(c["dy"] - 4.9) < 0.3]
    assert hits
    k2 = max(c["kappa2"] for c in hits)
    assert 1e-4 <= k2 <= 9e-4


def test_scan_continuity(model):
    dys = np.round(np.arange(0.0, 12.0001, 0.05), 4)
    scan = scan_curves(model, 11.0, dys, 1.15)
    assert scan.tracking_overlap.min() > 0.5
    assert scan.energies.shape == (len(dys), 436)


# van der Waals coefficient

def test_c6_matches_diagonalization_zero_field(model):
    c6 = c6_perturbative(field=0.0, model=model)
    for R in (20.0, 30.0):
        spec = model.spectrum(Geometry(R, 0.0), 0.0)
        shift = spec.eigenvalues[spec.dominant()]
        assert shift == pytest.approx(c6 / R**6, rel=0.05)
    assert c6 < 0


@pytest.mark.parametrize("theta", [0.0, 0.5])
def test_c6_matches_diagonalization_bias_field(model, theta):
    c6 = c6_perturbative(field=1.15, theta=theta, model=model)
    for R in (25.0, 30.0):
        spec = model.spectrum(Geometry(R, theta), 1.15)
        k = spec.dominant()
        assert spec.overlaps[k] > 0.99
        assert spec.eigenvalues[k] == pytest.approx(c6 / R**6, rel=0.05)


def test_c6_quartic_in_dipoles(model):
    base = c6_perturbative(field=1.15, model=model)
    scaled = c6_perturbative(field=1.15, model=model, dipole_scale=2 ** 0.25)
    assert scaled == pytest.approx(2 * base, rel=1e-12)


def test_c6_scaling_exponent():
    ns = (50, 60, 70, 79, 90)
    c6 = [abs(c6_perturbative(n, 0.0)) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(c6), 1)[0]
    assert abs(slope - 11) <= 1


def test_forster_channels_shape():
    ch = forster_channels(60)
    assert ch[0] == ((60, 2), (60, 2))
    assert ((61, 1), (59, 3)) in ch and ((59, 3), (61, 1)) in ch


# asymptotic energies

def test_asymptotic_zero_field_levels(model, table, consts):
    rows = asymptotic_energies(model, 0.0)
    ref = 2 * level_energy(S(79, 2, 2.5, 0.5), table, consts)
    for r in rows:
        a = AtomState(*_parse_label(r["atom1"]))
        b = AtomState(*_parse_label(r["atom2"]))
        expected = level_energy(a, table, consts) + level_energy(b, table, consts) - ref
        assert r["energy"] == pytest.approx(expected, abs=1e-6)


def _parse_label(text):
    from fractions import Fraction

    head, mj = text.split(",")
    for i, ch in enumerate(head):
        if ch.isalpha():
            n, l, j = int(head[:i]), "spdfg".index(ch), Fraction(head[i + 1:])
            return n, l, j, Fraction(mj)
    raise ValueError(text)


def test_asymptotic_stretched_slopes(model, consts):
    # a pair of stretched states shifts linearly with a g-factor combination
    def energy(rows, a1, a2):
        return next(r["energy"] for r in rows if r["atom1"] == a1 and r["atom2"] == a2)

    e0 = energy(asymptotic_energies(model, 0.0), "79d5/2,5/2", "79d5/2,5/2")
    e1 = energy(asymptotic_energies(model, 1.0), "79d5/2,5/2", "79d5/2,5/2")
    per_atom = consts.orbital_g_factor * 2 + consts.electron_g_factor * 0.5
    assert e1 - e0 == pytest.approx(2 * per_atom * consts.bohr_magneton_over_h, rel=1e-12)


def _breit_rabi(n, l, j, mj, field, table, consts):
    """Closed-form eigenvalue of the 2x2 (j = l +- 1/2, m_j) Zeeman block."""
    gl, gs, mu = consts.orbital_g_factor, consts.electron_g_factor, consts.bohr_magneton_over_h
    jp, jm = l + 0.5, l - 0.5

    def lande(jj):
        x = jj * (jj + 1)
        return gl * (x + l * (l + 1) - 0.75) / (2 * x) + gs * (x - l * (l + 1) + 0.75) / (2 * x)

    ep = level_energy(AtomState(n, l, jp, 0.5), table, consts)
    if abs(mj) == jp:
        return ep + mu * field * lande(jp) * mj
    em = level_energy(AtomState(n, l, jm, 0.5), table, consts)
    a = ep + mu * field * lande(jp) * mj
    b = em + mu * field * lande(jm) * mj
    off = mu * field * (gs - gl) * math.sqrt((l + 0.5) ** 2 - mj**2) / (2 * l + 1)
    mid, half = 0.5 * (a + b), math.sqrt(0.25 * (a - b) ** 2 + off**2)
    # each root keeps the label of the level it starts from at zero field
    upper = ep > em
    return mid + half if (j == jp) == upper else mid - half


def test_asymptotic_crossing_field(model, table, consts):
    # (79d5/2 3/2 + 79d3/2 3/2) meets (81p1/2 -1/2 + 77f7/2 -7/2): root-find on the
    # closed-form Zeeman energies, then on the module's asymptotic table
    ref = 2 * level_energy(S(79, 2, 2.5, 0.5), table, consts)

    def analytic(field):
        d = _breit_rabi(79, 2, 2.5, 1.5, field, table, consts) + _breit_rabi(79, 2, 1.5, 1.5, field, table, consts)
        pf = _breit_rabi(81, 1, 0.5, -0.5, field, table, consts) + _breit_rabi(77, 3, 3.5, -3.5, field, table, consts)
        return d - pf

    def module(field):
        rows = asymptotic_energies(model, field)
        d = next(r["energy"] for r in rows if {r["atom1"], r["atom2"]} == {"79d5/2,3/2", "79d3/2,3/2"})
        pf = next(r["energy"] for r in rows if r["atom1"] == "81p1/2,-1/2" and r["atom2"] == "77f7/2,-7/2")
        return d - pf

    b_analytic = brentq(analytic, 0.01, 2.0, xtol=1e-12)
    b_module = brentq(module, 0.01, 2.0, xtol=1e-12)
    assert 0.2 < b_analytic < 2.0
    assert b_module == pytest.approx(b_analytic, abs=1e-8)
    assert module(0.3) + ref == pytest.approx(analytic(0.3) + ref, abs=1e-6)


def test_asymptotic_vs_field_rows(model):
    rows = asymptotic_energies_vs_field([0.0, 1.15], model)
    assert {r["field"] for r in rows} == {0.0, 1.15}
    assert {r["channel"] for r in rows} == {"79d+79d", "80p+78f", "81p+77f"}
    per_field = len(rows) // 2
    # 79d: 10*11/2 unordered pairs; each p+f channel 6*14 ordered
    assert per_field == 55 + 84 + 84
