"""Fisher information for the four phase models and the position error bound.

Parameter order in the polar domain is ``[psi, d, theta, B]`` and in the
position domain ``[psi, x, y, B]``. Every FIM here is returned with the
common factor ``gamma = |alpha_0|^2 (2 pi / lambda)^2 / N_0`` already applied.

Amplitudes follow :func:`nearloc.scenario.gain_magnitudes`: the standard model
uses ``rho_0`` on every element, the other models weight element ``n`` by
``(d/d_n)^2`` relative to it. The closed forms below are the exact
counterparts of :func:`fim_numeric` under a symmetric pilot spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import GeometryError, ModelKind, Scenario, element_distance, gain_magnitudes

SINGULAR_COND = 1e12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class PilotSpectrum:
    """Per-subcarrier pilot energies |s[k]|^2 in mW/GHz, k = -K/2..K/2."""

    energies: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.ndim != 1 or e.size % 2 == 0:
            raise ValueError("pilot spectrum must be a 1-D array of odd length")
        if np.any(~np.isfinite(e)) or np.any(e <= 0):
            raise ValueError("pilot energies must be finite and strictly positive")
        object.__setattr__(self, "energies", e)

    @classmethod
    def flat(cls, s: Scenario) -> "PilotSpectrum":
        return cls(np.full(s.num_subcarriers, s.pilot_energy))

    @classmethod
    def from_symbols(cls, symbols) -> "PilotSpectrum":
        return cls(np.abs(np.asarray(symbols)) ** 2)

    @property
    def is_symmetric(self) -> bool:
        e = self.energies
        return bool(np.allclose(e, e[::-1], rtol=1e-12, atol=0.0))

    def moment(self, i: int) -> float:
        """E_{K,i} = sum_k k^i |s[k]|^2."""
        K = self.energies.size - 1
        k = np.arange(-(K // 2), K // 2 + 1, dtype=float)
        return float(np.sum(k**i * self.energies))


def array_moment(i: int, s: Scenario) -> float:
    """E_{N,i} = sum_n n^i."""
    return float(np.sum(s.antenna_indices.astype(float) ** i))


def _pilots(s: Scenario, pilots: PilotSpectrum | None) -> PilotSpectrum:
    pilots = pilots if pilots is not None else PilotSpectrum.flat(s)
    if pilots.energies.size != s.num_subcarriers:
        raise ValueError("pilot spectrum length does not match the subcarrier count")
    return pilots


def _gamma(s: Scenario) -> float:
    if s.noise_spectral <= 0:
        raise ValueError("noise level must be positive for a finite FIM")
    rho0 = s.wavelength / (2 * np.pi * s.distance)
    return rho0**2 * (2 * np.pi / s.wavelength) ** 2 / s.noise_spectral


def _check_geometry(s: Scenario):
    if s.distance == 0 or np.any(s.antenna_distances == 0):
        raise GeometryError("zero UE-to-element distance")


def phase_derivatives(model: ModelKind | str, s: Scenario):
    """Analytic derivatives of xi_n[k] w.r.t. (d, theta, B) on the full grid.

    Returns three arrays of shape (N+1, K+1).
    """
    model = ModelKind.parse(model)
    n = s.antenna_indices[:, None].astype(float)
    k = s.subcarrier_indices[None, :].astype(float)
    d, th, r_f, D = s.distance, s.angle, s.r_f, s.element_spacing
    shape = (n.size, k.size)
    dB = np.broadcast_to(-k * r_f, shape)
    if model is ModelKind.STANDARD:
        dd = np.broadcast_to(k * r_f, shape)
        dth = np.broadcast_to(n * D * np.sin(th), shape)
        return dd, dth, dB
    d_n = element_distance(s, n)
    radial = (d - n * D * np.cos(th)) / d_n  # d(d_n)/dd
    tangential = d * n * D * np.sin(th) / d_n  # d(d_n)/dtheta
    if model is ModelKind.WIDEBAND:
        dd = k * r_f * radial
        dth = np.broadcast_to(n * D * np.sin(th), shape)
    elif model is ModelKind.NEAR_FIELD:
        dd = radial - 1 + k * r_f
        dth = np.broadcast_to(tangential, shape)
    else:
        dd = radial - 1 + k * r_f * radial
        dth = tangential * (1 + k * r_f)
    return np.broadcast_to(dd, shape), np.broadcast_to(dth, shape), dB


def fim_numeric(model: ModelKind | str, s: Scenario, pilots: PilotSpectrum | None = None) -> np.ndarray:
    """Brute-force FIM: sum over every antenna and subcarrier of the rank-1 terms."""
    _check_geometry(s)
    pilots = _pilots(s, pilots)
    dd, dth, dB = phase_derivatives(model, s)
    rho = gain_magnitudes(model, s)
    w = (rho / rho[s.N // 2]) ** 2
    weight = w[:, None] * pilots.energies[None, :]
    G = np.stack([np.full(dd.shape, -s.wavelength / (2 * np.pi)), dd, dth, dB])
    J = np.einsum("anm,bnm,nm->ab", G, G, weight)
    return _gamma(s) * 0.5 * (J + J.T)


def a_sum(i: int, j: int, s: Scenario) -> float:
    """A_i^(j) = sum_n n^i (d/d_n)^(j+2)."""
    n = s.antenna_indices.astype(float)
    return float(np.sum(n**i * (s.distance / s.antenna_distances) ** (j + 2)))


def _closed_pilots(s: Scenario, pilots: PilotSpectrum | None) -> PilotSpectrum:
    _check_geometry(s)
    pilots = _pilots(s, pilots)
    if not pilots.is_symmetric:
        raise ValueError("closed-form FIMs require a symmetric pilot spectrum")
    return pilots


_V_RADIAL = np.array([0.0, 1.0, 0.0, -1.0])


def _e(i: int) -> np.ndarray:
    v = np.zeros(4)
    v[i] = 1.0
    return v


def fim_standard_closed(s: Scenario, pilots: PilotSpectrum | None = None) -> np.ndarray:
    p = _closed_pilots(s, pilots)
    EK0, EK2 = p.moment(0), p.moment(2)
    EN0, EN2 = array_moment(0, s), array_moment(2, s)
    lam, r_f, D, th = s.wavelength, s.r_f, s.element_spacing, s.angle
    J1 = (lam / (2 * np.pi)) ** 2 * EK0 * EN0 * np.outer(_e(0), _e(0))
    J2 = EK2 * EN0 * r_f**2 * np.outer(_V_RADIAL, _V_RADIAL)
    J3 = EK0 * EN2 * D**2 * np.sin(th) ** 2 * np.outer(_e(2), _e(2))
    return _gamma(s) * (J1 + J2 + J3)


def _coupling(vec3: np.ndarray) -> np.ndarray:
    """[[0, v^T], [v, 0]] for a 3-vector v over (d, theta, B)."""
    M = np.zeros((4, 4))
    M[0, 1:] = vec3
    M[1:, 0] = vec3
    return M


def fim_nearfield_closed(s: Scenario, pilots: PilotSpectrum | None = None) -> np.ndarray:
    p = _closed_pilots(s, pilots)
    EK0, EK2 = p.moment(0), p.moment(2)
    EN0, EN2 = array_moment(0, s), array_moment(2, s)
    lam, r_f, D = s.wavelength, s.r_f, s.element_spacing
    d, th = s.distance, s.angle
    c, sn = np.cos(th), np.sin(th)
    A = {(i, j): a_sum(i, j, s) for i in range(3) for j in range(3)}

    S = fim_standard_closed(s, p) / _gamma(s)
    J1 = S[0, 0] * np.outer(_e(0), _e(0))
    J2 = EK2 * EN0 * r_f**2 * np.outer(_V_RADIAL, _V_RADIAL)
    J3 = EK0 * EN2 * D**2 * sn**2 * np.outer(_e(2), _e(2))

    jvec = np.array([
        -(D / d) * c * A[1, 1] + A[0, 1] - A[0, 0],
        A[1, 1] * D * sn,
        0.0,
    ])
    # negative sign: d/dpsi and d/d(phase) of the mean differ by -j in this convention
    J4 = -(lam / (2 * np.pi)) * EK0 * _coupling(jvec)

    C11 = (A[0, 0] + A[0, 2]
           - 2 * ((D / d) * c * A[1, 2] + A[0, 1] - (D / d) * c * A[1, 1])
           + (D / d) ** 2 * A[2, 2] * c**2)
    C12 = D * sn * A[1, 2] - D * sn * A[1, 1] - (D**2 / d) * sn * c * A[2, 2]
    J5 = np.zeros((4, 4))
    J5[1, 1] = C11
    J5[1, 2] = J5[2, 1] = C12
    J5 *= EK0

    J = (A[0, 0] / EN0) * J1 + (A[0, 0] / EN0) * J2 + (A[2, 2] / EN2) * J3 + J4 + J5
    return _gamma(s) * J


def fim_wideband_closed(s: Scenario, pilots: PilotSpectrum | None = None) -> np.ndarray:
    p = _closed_pilots(s, pilots)
    EK0, EK2 = p.moment(0), p.moment(2)
    EN0 = array_moment(0, s)
    lam, r_f, D = s.wavelength, s.r_f, s.element_spacing
    d, th = s.distance, s.angle
    c, sn = np.cos(th), np.sin(th)
    A = {(i, j): a_sum(i, j, s) for i in range(3) for j in range(3)}

    J1 = (lam / (2 * np.pi)) ** 2 * EK0 * EN0 * np.outer(_e(0), _e(0))
    J2W = np.zeros((4, 4))
    J2W[1, 1] = A[0, 2]
    J2W[1, 3] = J2W[3, 1] = -A[0, 1]
    J2W[3, 3] = A[0, 0]
    J2W *= EK2 * r_f**2
    # bearing information: the element spacing term carries no d/d_n factor here
    J3W = EK0 * D**2 * sn**2 * A[2, 0] * np.outer(_e(2), _e(2))
    J4W = np.zeros((4, 4))
    J4W[1, 1] = A[2, 2] * (D / d) * c - 2 * A[1, 2]
    J4W[1, 3] = J4W[3, 1] = A[1, 1]
    J4W *= EK2 * r_f**2 * D * c / d
    J6W = -(lam / (2 * np.pi)) * EK0 * _coupling(np.array([0.0, D * sn * A[1, 0], 0.0]))

    J = (A[0, 0] / EN0) * J1 + J2W + J3W + J4W + J6W
    return _gamma(s) * J


def fim(model: ModelKind | str, s: Scenario, pilots: PilotSpectrum | None = None) -> np.ndarray:
    """Closed form where one exists, brute force for the general model."""
    model = ModelKind.parse(model)
    if model is ModelKind.STANDARD:
        return fim_standard_closed(s, pilots)
    if model is ModelKind.NEAR_FIELD:
        return fim_nearfield_closed(s, pilots)
    if model is ModelKind.WIDEBAND:
        return fim_wideband_closed(s, pilots)
    return fim_numeric(model, s, pilots)


def position_jacobian(s: Scenario) -> np.ndarray:
    """d[psi, d, theta, B] / d[psi, x, y, B]."""
    x, y = s.ue_position
    d = s.distance
    if d == 0:
        raise GeometryError("Jacobian is singular at d = 0")
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, x / d, y / d, 0.0],
        [0.0, -y / d**2, x / d**2, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def to_position_domain(J: np.ndarray, s: Scenario) -> np.ndarray:
    T = position_jacobian(s)
    out = T.T @ np.asarray(J) @ T
    return 0.5 * (out + out.T)


def _equilibrated_cond(M: np.ndarray) -> float:
    diag = np.diag(M)
    if np.any(diag <= 0):
        return np.inf
    scale = 1 / np.sqrt(diag)
    return float(np.linalg.cond(M * np.outer(scale, scale)))


def peb(J_pos: np.ndarray, bias_known: bool = False) -> float:
    """Position error bound in meters; ``inf`` when the position is not identifiable.

    With a known bias the B row/column is removed before inversion. A matrix
    whose diagonally equilibrated condition number exceeds 1e12 counts as
    singular.
    """
    J_pos = np.asarray(J_pos, dtype=float)
    if J_pos.shape != (4, 4):
        raise ValueError("expected a 4x4 position-domain FIM")
    if not np.all(np.isfinite(J_pos)):
        raise ValueError("FIM has non-finite entries")
    M = J_pos[:3, :3] if bias_known else J_pos
    if _equilibrated_cond(M) > SINGULAR_COND:
        return np.inf
    cov = np.linalg.inv(M)
    return float(np.sqrt(cov[1, 1] + cov[2, 2]))


def peb_for(model: ModelKind | str, s: Scenario, bias_known: bool,
            pilots: PilotSpectrum | None = None) -> float:
    return peb(to_position_domain(fim(model, s, pilots), s), bias_known)


def is_psd(J: np.ndarray, tol: float = PSD_TOL) -> bool:
    w = np.linalg.eigvalsh(0.5 * (J + J.T))
    return bool(w.min() >= -tol * max(abs(w.max()), np.finfo(float).tiny))
