import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dipolarxy.hilbert import (TWO_PI, basis_state, chi_minus, chi_plus,
                               chi_state, density_from_vector, w_state)
from dipolarxy.observables import (CHIRALITY_MAX, PauliString,
                                   ccw_triangle_orderings, chi_chi_full,
                                   chi_chi_restricted, chirality, expect,
                                   mermin_lhv_bound, mermin_s)


def P(symbols):
    return PauliString(tuple(symbols))

SQRT3 = np.sqrt(3.0)


def ccw_ordering(geometry):
    return ccw_triangle_orderings(geometry)[0]


class TestExpect:
    def test_zzz_on_basis_state(self):
        assert expect(basis_state("udu"), P("zzz")) == pytest.approx(-1.0)

    def test_xx_on_bell_like(self):
        psi = (basis_state("uu") + basis_state("dd")) / np.sqrt(2)
        assert expect(psi, P("xx")) == pytest.approx(1.0)

    def test_density_matches_vector(self):
        psi = chi_plus()
        rho = density_from_vector(psi)
        assert expect(rho, P("xy1")) == pytest.approx(
            expect(psi, P("xy1")), abs=1e-12)

    @given(st.integers(0, 2 ** 16))
    @settings(max_examples=25, deadline=None)
    def test_expectation_is_real_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=8) + 1j * rng.normal(size=8)
        psi /= np.linalg.norm(psi)
        v = expect(psi, P("xyz"))
        assert isinstance(v, float) and -1 - 1e-9 <= v <= 1 + 1e-9


class TestChirality:
    def test_max_constant(self):
        assert CHIRALITY_MAX == pytest.approx(2 * SQRT3)

    def test_chi_plus_extreme(self, triangle):
        res = chirality(chi_plus(), ccw_ordering(triangle))
        assert res.value == pytest.approx(2 * SQRT3, abs=1e-9)

    def test_chi_minus_extreme(self, triangle):
        res = chirality(chi_minus(), ccw_ordering(triangle))
        assert res.value == pytest.approx(-2 * SQRT3, abs=1e-9)

    def test_w_state_zero(self, triangle):
        res = chirality(w_state(), ccw_ordering(triangle))
        assert res.value == pytest.approx(0.0, abs=1e-9)

    def test_sweep_shape(self, triangle):
        # chi(phi) = 2 sqrt(3) * (2/3) * (sin phi - sin 2 phi ... ) for the
        # imprinted family reduces to -(4/sqrt(3)) (sin phi + sin(phi -
        # 2pi/3) sign structure; assert the peaks and zeros instead
        ordering = ccw_ordering(triangle)
        vals = {phi: chirality(chi_state(phi), ordering).value
                for phi in np.linspace(0, TWO_PI, 13)}
        assert vals[0.0] == pytest.approx(0.0, abs=1e-9)
        best = max(vals, key=vals.get)
        assert best == pytest.approx(TWO_PI / 3, abs=1e-9)
        worst = min(vals, key=vals.get)
        assert worst == pytest.approx(2 * TWO_PI / 3, abs=1e-9)

    def test_six_terms_reported(self, triangle):
        res = chirality(chi_plus(), ccw_ordering(triangle))
        assert len(res.terms) == 6

    def test_reversed_ordering_flips_sign(self, triangle):
        o = list(ccw_ordering(triangle))
        res_ccw = chirality(chi_plus(), o)
        res_cw = chirality(chi_plus(), o[::-1])
        assert res_cw.value == pytest.approx(-res_ccw.value, abs=1e-12)


class TestChiChi:
    def test_connected_vanishes_on_product_state(self, pair_mirror):
        geo, pattern = pair_mirror
        tris = ccw_triangle_orderings(geo)
        psi = np.kron(chi_plus(), chi_minus())
        assert chi_chi_full(psi, *tris) == pytest.approx(0.0, abs=1e-9)
        assert chi_chi_restricted(psi, geo, pattern) == pytest.approx(
            0.0, abs=1e-9)

    def test_overlapping_triangles_rejected(self, pair_mirror):
        geo, _ = pair_mirror
        psi = np.kron(chi_plus(), chi_minus())
        with pytest.raises(ValueError):
            chi_chi_full(psi, (0, 1, 2), (2, 3, 4))

    def test_entangled_opposite_chirality_pair(self, pair_mirror):
        # (chi+ chi- + chi- chi+)/sqrt(2): individual chiralities average
        # to zero, the connected 6-atom correlator reaches +/-12
        geo, pattern = pair_mirror
        tris = ccw_triangle_orderings(geo)
        bell = (np.kron(chi_plus(), chi_minus())
                + np.kron(chi_minus(), chi_plus())) / np.sqrt(2)
        assert chi_chi_full(bell, *tris) == pytest.approx(12.0, abs=1e-9)
        assert chi_chi_restricted(bell, geo, pattern) == pytest.approx(
            2.0, abs=1e-9)

    def test_entangled_same_chirality_pair(self, pair_mirror):
        geo, pattern = pair_mirror
        tris = ccw_triangle_orderings(geo)
        sym = (np.kron(chi_plus(), chi_plus())
               + np.kron(chi_minus(), chi_minus())) / np.sqrt(2)
        assert chi_chi_full(sym, *tris) == pytest.approx(-12.0, abs=1e-9)
        assert chi_chi_restricted(sym, geo, pattern) == pytest.approx(
            -2.0, abs=1e-9)


class TestMermin:
    def test_w_state_value(self):
        # |<zzz> - <xxz> - <xzx> - <zxx>| = 3 exactly on the W state
        assert mermin_s(w_state()) == pytest.approx(3.0, abs=1e-9)

    def test_lhv_bound(self):
        assert mermin_lhv_bound() == pytest.approx(2.0)

    def test_lhv_bound_exhaustive(self):
        # brute force over all deterministic local assignments
        best = 0.0
        for bits in itertools.product([-1, 1], repeat=6):
            z = bits[:3]
            x = bits[3:]
            s = abs(z[0] * z[1] * z[2] - x[0] * x[1] * z[2]
                    - x[0] * z[1] * x[2] - z[0] * x[1] * x[2])
            best = max(best, s)
        assert best == pytest.approx(mermin_lhv_bound())

    def test_correlator_input(self):
        corr = {"zzz": 1.0, "xxz": -2 / 3, "xzx": -2 / 3, "zxx": -2 / 3}
        assert mermin_s(corr) == pytest.approx(3.0)

    def test_product_state_below_bound(self):
        psi = basis_state("uuu")
        assert mermin_s(psi) <= mermin_lhv_bound() + 1e-9
