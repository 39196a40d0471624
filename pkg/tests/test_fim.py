import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_scenario
from nearloc.fim import (
    PilotSpectrum,
    a_sum,
    array_moment,
    fim,
    fim_nearfield_closed,
    fim_numeric,
    fim_standard_closed,
    fim_wideband_closed,
    is_psd,
    peb,
    peb_for,
    position_jacobian,
    to_position_domain,
)
from nearloc.scenario import ModelKind, Scenario, gain_magnitudes, phase_grid

CLOSED = {
    ModelKind.STANDARD: fim_standard_closed,
    ModelKind.NEAR_FIELD: fim_nearfield_closed,
    ModelKind.WIDEBAND: fim_wideband_closed,
}


def rel_frob(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def fd_fim(model, s, psi_offset=0.0, h=1e-6):
    """Slepian-Bangs FIM (1/N0 convention) with central differences of the mean.

    Amplitudes are frozen at the nominal point; psi enters as a free phase.
    Only ``phase_grid`` is shared with the code under test.
    """
    rho = gain_magnitudes(model, s)
    energies = np.full(s.num_subcarriers, s.pilot_energy)
    lam = s.wavelength

    def xi(d, th, B):
        return phase_grid(model, s.replace(clock_bias=B).with_polar(d, th))

    d, th, B = s.distance, s.angle, s.clock_bias
    grads = [np.ones_like(phase_grid(model, s))]  # d(mean)/d(psi) / (j mean)
    for i, step in enumerate([h * d, h, h * max(1.0, abs(B))]):
        p = np.array([d, th, B])
        lo, hi = p.copy(), p.copy()
        lo[i] -= step
        hi[i] += step
        grads.append(-(2 * np.pi / lam) * (xi(*hi) - xi(*lo)) / (2 * step))
    # mean = rho_n s_k exp(j(psi + psi_offset)) exp(-j 2 pi xi / lambda); all partials are
    # j * mean * (real factor), so Re{conj(a) b} reduces to |mean|^2 * (a b)
    w = (rho**2)[:, None] * energies[None, :] / s.noise_spectral
    G = np.stack(grads)
    J = np.einsum("anm,bnm,nm->ab", G, G, w)
    return J * np.cos(psi_offset) ** 2 + J * np.sin(psi_offset) ** 2


def test_pilot_moments(nominal):
    p = PilotSpectrum.flat(nominal)
    assert p.moment(0) == pytest.approx(257 * 10.0)
    assert p.moment(1) == pytest.approx(0.0, abs=1e-9)
    assert p.moment(2) == pytest.approx(10.0 * 2 * sum(k * k for k in range(1, 129)))
    assert array_moment(0, nominal) == 129
    assert array_moment(2, nominal) == 178880


def test_pilot_spectrum_validation():
    with pytest.raises(ValueError):
        PilotSpectrum(np.array([1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        PilotSpectrum(np.ones(4))


def test_single_antenna_single_subcarrier():
    s = Scenario(num_antennas=1, num_subcarriers=1)
    for m in ModelKind:
        J = fim_numeric(m, s)
        rho0 = s.wavelength / (2 * np.pi * s.distance)
        gamma = rho0**2 * (2 * np.pi / s.wavelength) ** 2 / s.noise_spectral
        expected = gamma * (s.wavelength / (2 * np.pi)) ** 2 * s.pilot_energy
        assert J[0, 0] == pytest.approx(expected, rel=1e-12)
        off = J.copy()
        off[0, 0] = 0
        assert np.all(np.abs(off) <= 1e-12 * J[0, 0])


@pytest.mark.parametrize("model", list(ModelKind))
def test_power_scaling(model, nominal):
    J1 = fim_numeric(model, nominal)
    J4 = fim_numeric(model, nominal.replace(transmit_power=4.0))
    np.testing.assert_allclose(J4, 4 * J1, rtol=1e-13, atol=0)


@pytest.mark.parametrize("model", list(ModelKind))
@pytest.mark.parametrize("geom", [(2.0, np.pi / 4, 20.0), (0.7, 2.5, -30.0), (15.0, 1.2, 5.0)])
def test_numeric_matches_finite_difference_oracle(model, geom):
    d, th, B = geom
    s = Scenario(clock_bias=B).with_polar(d, th)
    Jn = fim_numeric(model, s)
    Jfd = fd_fim(model, s)
    scale = np.sqrt(np.outer(np.diag(Jn), np.diag(Jn)))
    # wideband bearing derivative omits the k*r_f*d(d_n)/dtheta delay term, O(K r_f) ~ 2e-3
    tol = 1e-3 if model is ModelKind.WIDEBAND else 1e-5
    assert np.max(np.abs(Jn - Jfd) / scale) < tol


def test_wideband_gap_is_the_delay_bearing_term():
    s = Scenario(clock_bias=20.0).with_polar(2.0, np.pi / 4)
    h = 1e-6
    xi = lambda th: phase_grid("wideband", s.with_polar(s.distance, th))
    fd = (xi(s.angle + h) - xi(s.angle - h)) / (2 * h)
    n = s.antenna_indices[:, None]
    k = s.subcarrier_indices[None, :]
    d_n = s.antenna_distances[:, None]
    listed = n * s.element_spacing * np.sin(s.angle)
    omitted = k * s.r_f * s.distance * n * s.element_spacing * np.sin(s.angle) / d_n
    np.testing.assert_allclose(fd, listed + omitted, rtol=1e-6, atol=1e-9)


def test_fim_independent_of_channel_phase():
    s = Scenario().with_polar(2.0, 1.0)
    J0 = fd_fim("general", s, psi_offset=0.0)
    J1 = fd_fim("general", s, psi_offset=2.1)
    np.testing.assert_allclose(J0, J1, rtol=1e-12)
    p0 = peb(to_position_domain(J0, s), False)
    p1 = peb(to_position_domain(J1, s), False)
    assert p0 == pytest.approx(p1, rel=1e-10)


def test_standard_broadside_bearing_information():
    s = Scenario(ue_position=(0.0, 3.0))
    J = fim_standard_closed(s)
    p = PilotSpectrum.flat(s)
    rho0 = s.wavelength / (2 * np.pi * s.distance)
    gamma = rho0**2 * (2 * np.pi / s.wavelength) ** 2 / s.noise_spectral
    assert J[2, 2] == pytest.approx(gamma * p.moment(0) * 178880 * s.element_spacing**2, rel=1e-12)


def test_standard_polar_block_rank_two(rng):
    for _ in range(20):
        s = random_scenario(rng)
        w = np.linalg.eigvalsh(fim_standard_closed(s)[1:, 1:])
        assert w[0] / w[-1] < 1e-12
        assert w[1] / w[-1] > 1e-12


@pytest.mark.parametrize("model", [ModelKind.STANDARD, ModelKind.NEAR_FIELD, ModelKind.WIDEBAND])
def test_closed_forms_match_numeric(model, rng):
    for _ in range(30):
        s = random_scenario(rng)
        assert rel_frob(CLOSED[model](s), fim_numeric(model, s)) < 1e-8


def test_closed_forms_reject_asymmetric_spectrum(nominal):
    e = np.linspace(1.0, 2.0, nominal.num_subcarriers)
    with pytest.raises(ValueError):
        fim_standard_closed(nominal, PilotSpectrum(e))
    # the brute-force sum has no such restriction
    assert np.all(np.isfinite(fim_numeric("general", nominal, PilotSpectrum(e))))


def test_a_sum_limits():
    far = Scenario().with_polar(1e6, 1.0)
    assert a_sum(0, 0, far) == pytest.approx(129, rel=1e-6)
    assert a_sum(2, 2, far) == pytest.approx(178880, rel=1e-6)
    broadside = Scenario(ue_position=(0.0, 1.5))
    for j in range(3):
        assert abs(a_sum(1, j, broadside)) < 1e-9


def test_nearfield_full_rank_at_two_meters(nominal):
    s = nominal.with_polar(2.0, nominal.angle)
    w = np.linalg.eigvalsh(fim_nearfield_closed(s)[1:, 1:])
    assert w[0] > 0
    assert w[0] / w[-1] > 1e-9


def test_wideband_broadside_has_no_endfire_term():
    s = Scenario(ue_position=(0.0, 1.0))
    J = fim_wideband_closed(s)
    p = PilotSpectrum.flat(s)
    rho0 = s.wavelength / (2 * np.pi * s.distance)
    g = rho0**2 * (2 * np.pi / s.wavelength) ** 2 / s.noise_spectral
    base = g * p.moment(2) * s.r_f**2
    assert J[1, 1] == pytest.approx(base * a_sum(0, 2, s), rel=1e-12)
    assert J[1, 3] == pytest.approx(-base * a_sum(0, 1, s), rel=1e-12)


@pytest.mark.parametrize("closed", [fim_nearfield_closed, fim_wideband_closed])
def test_far_field_limit(closed, nominal):
    s = nominal.with_polar(100 * nominal.far_field_distance, nominal.angle)
    assert rel_frob(closed(s), fim_standard_closed(s)) < 1e-2


def test_position_domain_matches_radial_tangential_form(nominal):
    s = nominal.with_polar(3.0, 1.1)
    x, y = s.ue_position
    d = s.distance
    Jp = to_position_domain(fim_standard_closed(s), s)
    p = PilotSpectrum.flat(s)
    rho0 = s.wavelength / (2 * np.pi * d)
    g = rho0**2 * (2 * np.pi / s.wavelength) ** 2 / s.noise_spectral
    ex = np.array([x / d, y / d, -1.0])
    eperp = np.array([-y / d, x / d, 0.0])
    expected = (g * p.moment(2) * 129 * s.r_f**2 * np.outer(ex, ex)
                + g * p.moment(0) * 178880 * s.element_spacing**2 * y**2 / d**4 * np.outer(eperp, eperp))
    np.testing.assert_allclose(Jp[1:, 1:], expected, rtol=1e-10, atol=1e-12 * np.abs(expected).max())
    assert ex @ eperp == pytest.approx(0.0, abs=1e-15)


def test_position_domain_rank_two(nominal):
    Jp = to_position_domain(fim_standard_closed(nominal), nominal)
    w = np.linalg.eigvalsh(Jp[1:, 1:])
    assert abs(w[0]) / w[-1] < 1e-12


def test_jacobian_structure(nominal):
    T = position_jacobian(nominal)
    x, y = nominal.ue_position
    # finite-difference check of (d, theta) w.r.t. (x, y)
    h = 1e-7
    num = np.array([
        [(np.hypot(x + h, y) - np.hypot(x - h, y)) / (2 * h), (np.hypot(x, y + h) - np.hypot(x, y - h)) / (2 * h)],
        [(np.arctan2(y, x + h) - np.arctan2(y, x - h)) / (2 * h), (np.arctan2(y + h, x) - np.arctan2(y - h, x)) / (2 * h)],
    ])
    np.testing.assert_allclose(T[1:3, 1:3], num, rtol=1e-6)


def test_peb_standard_unknown_bias_not_identifiable(rng):
    for _ in range(10):
        s = random_scenario(rng)
        assert peb_for("standard", s, bias_known=False) == np.inf
        assert np.isfinite(peb_for("standard", s, bias_known=True))


def test_peb_bias_knowledge_short_distance(nominal):
    s = nominal.with_polar(1.0, nominal.angle)
    ratio = peb_for("general", s, False) / peb_for("general", s, True)
    assert 1.0 <= ratio < 1.5


@pytest.mark.parametrize("model", list(ModelKind))
def test_peb_power_scaling(model, nominal):
    s = nominal.with_polar(2.0, 1.0)
    p1 = peb_for(model, s, True)
    p4 = peb_for(model, s.replace(transmit_power=4.0), True)
    assert p4 == pytest.approx(p1 / 2, rel=1e-10)


def test_peb_rejects_nonfinite():
    J = np.eye(4)
    J[1, 2] = np.nan
    with pytest.raises(ValueError):
        peb(J)


def test_peb_diagonal():
    J = np.diag([1.0, 4.0, 16.0, 1.0])
    assert peb(J, True) == pytest.approx(np.sqrt(1 / 4 + 1 / 16))


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.5, 50.0), st.floats(np.pi / 8, 7 * np.pi / 8), st.floats(-50, 50),
    st.sampled_from(list(ModelKind)),
)
def test_fim_properties(d, th, B, model):
    s = Scenario(clock_bias=B).with_polar(d, th)
    J = fim(model, s)
    assert np.max(np.abs(J - J.T)) <= 1e-12 * np.abs(J).max()
    assert is_psd(J)
    Jp = to_position_domain(J, s)
    assert is_psd(Jp)
    known = peb(Jp, True)
    unknown = peb(Jp, False)
    assert unknown >= known * (1 - 1e-9)
