"""Synthetic uplink observations: LOS path, optional scatterer paths, AWGN."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import (
    GeometryError,
    ModelKind,
    Scatterer,
    Scenario,
    gain_magnitudes,
    phase_grid,
)


@dataclass(frozen=True)
class ObservationGrid:
    """Received samples Y (antennas x subcarriers) with the known pilots."""

    samples: np.ndarray
    pilots: np.ndarray
    rng_seed: int | None = None

    def __post_init__(self):
        Y = np.asarray(self.samples, dtype=complex)
        S = np.asarray(self.pilots, dtype=complex)
        if Y.ndim != 2 or S.ndim != 1 or Y.shape[1] != S.size:
            raise ValueError(f"shape mismatch: samples {Y.shape}, pilots {S.shape}")
        object.__setattr__(self, "samples", Y)
        object.__setattr__(self, "pilots", S)

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape

    def rows(self, start: int, stop: int) -> "ObservationGrid":
        return ObservationGrid(self.samples[start:stop], self.pilots, self.rng_seed)

    def to_bytes(self) -> bytes:
        """Little-endian interleaved float64 re/im, row-major antennas x subcarriers."""
        return _interleave(self.samples).tobytes()

    def dump(self, path: str | Path, include_pilots: bool = True):
        Path(path).write_bytes(self.to_bytes())
        if include_pilots:
            Path(str(path) + ".pilots").write_bytes(_interleave(self.pilots).tobytes())

    @classmethod
    def load(cls, path: str | Path, shape: tuple[int, int]) -> "ObservationGrid":
        samples = _deinterleave(Path(path).read_bytes()).reshape(shape)
        pilot_path = Path(str(path) + ".pilots")
        pilots = _deinterleave(pilot_path.read_bytes()) if pilot_path.exists() else np.ones(shape[1])
        return cls(samples, pilots)


def _interleave(z: np.ndarray) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=np.complex128)
    return z.view(np.float64).astype("<f8", copy=False)


def _deinterleave(raw: bytes) -> np.ndarray:
    f = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return f[0::2] + 1j * f[1::2]


def steering_vector(beta: float, length: int) -> np.ndarray:
    """[a(beta)]_m = exp(j 2 pi beta m / length), m = -(length-1)/2..(length-1)/2."""
    m = np.arange(length) - (length - 1) / 2
    return np.exp(2j * np.pi * beta * m / length)


def qpsk_pilots(s: Scenario, rng: np.random.Generator) -> np.ndarray:
    amp = np.sqrt(s.pilot_energy / 2)
    bits = rng.integers(0, 2, size=(2, s.num_subcarriers))
    return amp * ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1))


def nlos_gain(sc: Scatterer, n, s: Scenario):
    """Bistatic radar-equation gain of a point scatterer seen by element(s) n."""
    n = np.asarray(n, dtype=float)
    p = np.asarray(sc.position)
    r1 = np.linalg.norm(p - s.position)
    r2 = np.hypot(p[0] - n * s.element_spacing, p[1])
    if r1 == 0 or np.any(r2 == 0):
        raise GeometryError("scatterer coincides with the UE or an antenna")
    lam = s.wavelength
    mag = lam * np.sqrt(sc.radar_cross_section) / ((4 * np.pi) ** 1.5 * r1 * r2)
    out = mag * np.exp(-2j * np.pi * (r1 + r2) / lam)
    return out[()] if out.ndim == 0 else out


def los_component(s: Scenario, model: ModelKind | str, pilots: np.ndarray) -> np.ndarray:
    model = ModelKind.parse(model)
    psi = -2 * np.pi * s.distance / s.wavelength
    alpha = gain_magnitudes(model, s) * np.exp(1j * psi)
    xi = phase_grid(model, s)
    return alpha[:, None] * pilots[None, :] * np.exp(-2j * np.pi * xi / s.wavelength)


def nlos_component(s: Scenario, pilots: np.ndarray) -> np.ndarray:
    out = np.zeros((s.num_antennas, s.num_subcarriers), dtype=complex)
    n = s.antenna_indices
    k = s.subcarrier_indices[None, :]
    for sc in s.scatterers:
        p = np.asarray(sc.position)
        hops = np.linalg.norm(p - s.position) + np.linalg.norm(p - s.antenna_positions, axis=1)
        # the gain carries the carrier phase of the full path; only the delay term remains
        delay_phase = -2 * np.pi * k * (hops[:, None] - s.clock_bias) * s.r_f / s.wavelength
        out += nlos_gain(sc, n, s)[:, None] * pilots[None, :] * np.exp(1j * delay_phase)
    return out


def synthesize(s: Scenario, model: ModelKind | str = ModelKind.GENERAL, seed: int = 0,
               pilots: np.ndarray | None = None) -> ObservationGrid:
    """Draw Y = LOS + NLOS + noise; identical inputs give bit-identical output.

    Pilots are QPSK from the seeded generator unless supplied. The noise is
    circular Gaussian with variance N_0/2 per real dimension.
    """
    rng = np.random.default_rng(seed)
    drawn = qpsk_pilots(s, rng)
    if pilots is None:
        pilots = drawn
    else:
        pilots = np.asarray(pilots, dtype=complex)
        if pilots.shape != (s.num_subcarriers,):
            raise ValueError("pilot vector length does not match the subcarrier count")
    noise = rng.standard_normal((2, s.num_antennas, s.num_subcarriers))
    Y = los_component(s, model, pilots)
    if s.scatterers:
        Y = Y + nlos_component(s, pilots)
    if s.noise_spectral > 0:
        Y = Y + np.sqrt(s.noise_spectral / 2) * (noise[0] + 1j * noise[1])
    return ObservationGrid(Y, pilots, seed)
