"""Physical scenario, geometry, phase models and operating regimes.

Geometry is 2D: a uniform linear array of ``N+1`` elements on the x axis,
centered at the origin, and a single-antenna UE strictly above it (y > 0).
All lengths are meters and frequencies Hz. Phases are returned as path
lengths ``xi`` in meters; the radian phase applied to the signal is
``-2*pi*xi/lambda``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

C = 3e8  # m/s


class ModelKind(str, enum.Enum):
    GENERAL = "general"
    STANDARD = "standard"
    NEAR_FIELD = "nearfield"
    WIDEBAND = "wideband"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        aliases = {
            "general": cls.GENERAL,
            "standard": cls.STANDARD,
            "standard_far_field": cls.STANDARD,
            "nearfield": cls.NEAR_FIELD,
            "near_field": cls.NEAR_FIELD,
            "narrowband_near_field": cls.NEAR_FIELD,
            "wideband": cls.WIDEBAND,
            "wideband_far_field": cls.WIDEBAND,
        }
        try:
            return aliases[value.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown model kind {value!r}") from None


class FieldZone(str, enum.Enum):
    FAR_FIELD = "far_field"
    RADIATIVE_NEAR_FIELD = "radiative_near_field"
    REACTIVE = "reactive"


class BandwidthClass(str, enum.Enum):
    NARROWBAND = "narrowband"
    SPATIAL_WIDEBAND = "spatial_wideband"


class GeometryError(ValueError):
    """Raised when the geometry makes a quantity undefined (zero distance)."""


@dataclass(frozen=True)
class Scatterer:
    position: tuple[float, float]
    radar_cross_section: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if self.radar_cross_section < 0:
            raise ValueError("radar cross section must be non-negative")


@dataclass(frozen=True)
class RegimeReport:
    field_zone: FieldZone
    bandwidth_class: BandwidthClass
    beam_squint: bool
    far_field_distance: float
    reactive_distance: float
    wideband_threshold_hz: float


@dataclass(frozen=True)
class Scenario:
    """Full physical configuration of one uplink localization problem.

    Defaults reproduce the nominal 28 GHz / 100 MHz / 129-element setup with
    the UE at [1, 8] m and a 20 m clock bias.
    """

    ue_position: tuple[float, float] = (1.0, 8.0)
    clock_bias: float = 20.0
    carrier_frequency: float = 28e9
    bandwidth: float = 100e6
    num_subcarriers: int = 257
    num_antennas: int = 129
    element_spacing: float | None = None  # None -> lambda/2
    transmit_power: float = 1.0  # mW
    noise_spectral: float = 4.0049e-9  # mW/GHz
    scatterers: tuple[Scatterer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        x, y = (float(v) for v in self.ue_position)
        object.__setattr__(self, "ue_position", (x, y))
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", 0.5 * C / self.carrier_frequency)
        if self.num_subcarriers < 1 or self.num_subcarriers % 2 == 0:
            raise ValueError("num_subcarriers (K+1) must be an odd positive integer")
        if self.num_antennas < 1 or self.num_antennas % 2 == 0:
            raise ValueError("num_antennas (N+1) must be an odd positive integer")
        if not (y > 0):
            raise GeometryError("UE must lie strictly above the array (y > 0)")
        if self.carrier_frequency <= 0 or self.bandwidth <= 0 or self.element_spacing <= 0:
            raise ValueError("carrier frequency, bandwidth and spacing must be positive")
        if self.bandwidth > self.carrier_frequency / 10:
            raise ValueError("bandwidth exceeds f_c/10: beam squint regime is not modeled")
        if self.transmit_power < 0 or self.noise_spectral < 0:
            raise ValueError("power and noise level must be non-negative")
        for sc in self.scatterers:
            p = np.asarray(sc.position)
            if np.linalg.norm(p - self.position) == 0 or np.any(
                np.linalg.norm(self.antenna_positions - p, axis=1) == 0
            ):
                raise GeometryError("scatterer coincides with the UE or an antenna")

    # derived quantities
    @property
    def wavelength(self) -> float:
        return C / self.carrier_frequency

    @property
    def N(self) -> int:
        return self.num_antennas - 1

    @property
    def K(self) -> int:
        return self.num_subcarriers - 1

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.num_subcarriers

    @property
    def r_f(self) -> float:
        return self.subcarrier_spacing / self.carrier_frequency

    @property
    def sample_period(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def position(self) -> np.ndarray:
        return np.array(self.ue_position)

    @property
    def distance(self) -> float:
        return float(np.hypot(*self.ue_position))

    @property
    def angle(self) -> float:
        return float(np.arccos(self.ue_position[0] / self.distance))

    @property
    def antenna_indices(self) -> np.ndarray:
        return np.arange(-(self.N // 2), self.N // 2 + 1)

    @property
    def subcarrier_indices(self) -> np.ndarray:
        return np.arange(-(self.K // 2), self.K // 2 + 1)

    @property
    def antenna_positions(self) -> np.ndarray:
        n = self.antenna_indices
        return np.column_stack([n * self.element_spacing, np.zeros(n.size)])

    @property
    def antenna_distances(self) -> np.ndarray:
        """d_n for every element, ordered n = -N/2..N/2."""
        return np.linalg.norm(self.position - self.antenna_positions, axis=1)

    @property
    def aperture(self) -> float:
        return self.num_antennas * self.element_spacing

    @property
    def far_field_distance(self) -> float:
        return 2 * self.aperture**2 / self.wavelength

    @property
    def pilot_energy(self) -> float:
        """E|s[k]|^2 = P_t/W in mW/GHz."""
        return self.transmit_power / (self.bandwidth * 1e-9)

    def with_polar(self, d: float, theta: float) -> "Scenario":
        return replace(self, ue_position=(d * np.cos(theta), d * np.sin(theta)))

    def with_spacing(self, spacing: float) -> "Scenario":
        return replace(self, element_spacing=spacing)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


def _check_indices(s: Scenario, n, k):
    n_arr, k_arr = np.asarray(n), np.asarray(k)
    if np.any(np.abs(n_arr) > s.N // 2):
        raise IndexError(f"antenna index out of range [-{s.N // 2}, {s.N // 2}]")
    if np.any(np.abs(k_arr) > s.K // 2):
        raise IndexError(f"subcarrier index out of range [-{s.K // 2}, {s.K // 2}]")


def element_distance(s: Scenario, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    x, y = s.ue_position
    return np.hypot(x - n * s.element_spacing, y)


def phase(model: ModelKind | str, n, k, s: Scenario):
    """Path-length phase xi_n[k] in meters for the selected model.

    ``n`` and ``k`` broadcast against each other, so
    ``phase(m, s.antenna_indices[:, None], s.subcarrier_indices[None, :], s)``
    yields the full (N+1)x(K+1) grid.
    """
    model = ModelKind.parse(model)
    _check_indices(s, n, k)
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    d, theta, B, r_f = s.distance, s.angle, s.clock_bias, s.r_f
    if model is ModelKind.STANDARD:
        out = -n * s.element_spacing * np.cos(theta) + k * (d - B) * r_f
    elif model is ModelKind.WIDEBAND:
        d_n = element_distance(s, n)
        out = -n * s.element_spacing * np.cos(theta) + k * (d_n - B) * r_f
    elif model is ModelKind.NEAR_FIELD:
        d_n = element_distance(s, n)
        out = (d_n - d) + k * (d - B) * r_f
    else:
        d_n = element_distance(s, n)
        out = (d_n - d) + k * (d_n - B) * r_f
    return out[()] if out.ndim == 0 else out


def phase_grid(model: ModelKind | str, s: Scenario) -> np.ndarray:
    return phase(model, s.antenna_indices[:, None], s.subcarrier_indices[None, :], s)


def channel_gain(n, s: Scenario):
    """alpha_n = rho_n * exp(j psi) with rho_n = lambda/(2 pi d_n), psi = -2 pi d/lambda."""
    _check_indices(s, n, 0)
    d_n = element_distance(s, n)
    if np.any(d_n == 0):
        raise GeometryError("UE coincides with an antenna element")
    psi = -2 * np.pi * s.distance / s.wavelength
    out = s.wavelength / (2 * np.pi * d_n) * np.exp(1j * psi)
    return out[()] if out.ndim == 0 else out


def wrapped_channel_phase(s: Scenario) -> float:
    """psi wrapped to (-pi, pi]."""
    psi = -2 * np.pi * s.distance / s.wavelength
    w = np.angle(np.exp(1j * psi))
    return float(np.pi if w == -np.pi else w)


def gain_magnitudes(model: ModelKind | str, s: Scenario) -> np.ndarray:
    """Per-element LOS amplitudes used by each model.

    The standard far-field model uses the reference amplitude rho_0 on every
    element; the other three keep the per-element path loss rho_n.
    """
    model = ModelKind.parse(model)
    rho0 = s.wavelength / (2 * np.pi * s.distance)
    if model is ModelKind.STANDARD:
        return np.full(s.num_antennas, rho0)
    return s.wavelength / (2 * np.pi * s.antenna_distances)


def classify_regime(s: Scenario) -> RegimeReport:
    D, lam = s.aperture, s.wavelength
    far = 2 * D**2 / lam
    reactive = 0.62 * np.sqrt(D**3 / lam)
    d = s.distance
    if d > far:
        zone = FieldZone.FAR_FIELD
    elif d > reactive:
        zone = FieldZone.RADIATIVE_NEAR_FIELD
    else:
        zone = FieldZone.REACTIVE
    wb = C / D
    band = BandwidthClass.SPATIAL_WIDEBAND if s.bandwidth > wb else BandwidthClass.NARROWBAND
    return RegimeReport(
        field_zone=zone,
        bandwidth_class=band,
        beam_squint=s.bandwidth > s.carrier_frequency / 10,
        far_field_distance=far,
        reactive_distance=reactive,
        wideband_threshold_hz=wb,
    )


# config loading

_CONFIG_KEYS = {
    "ue_x_m", "ue_y_m", "bias_m", "fc_hz", "bw_hz", "n_subcarriers", "n_antennas",
    "spacing_over_lambda", "pt_mw", "n0_mw_per_ghz", "scatterers",
}


def scenario_from_dict(cfg: Mapping[str, Any], base: Scenario | None = None) -> Scenario:
    """Build a Scenario from the flat config keys; missing keys keep ``base`` values."""
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    base = base or Scenario()
    fc = float(cfg.get("fc_hz", base.carrier_frequency))
    if "spacing_over_lambda" in cfg:
        spacing = float(cfg["spacing_over_lambda"]) * C / fc
    elif "fc_hz" in cfg:
        spacing = base.element_spacing / base.wavelength * C / fc
    else:
        spacing = base.element_spacing
    scat: Sequence[Scatterer] = base.scatterers
    if "scatterers" in cfg:
        scat = tuple(
            Scatterer((float(e["x_m"]), float(e["y_m"])), float(e.get("rcs_m2", 10.0)))
            for e in (cfg["scatterers"] or [])
        )
    return Scenario(
        ue_position=(float(cfg.get("ue_x_m", base.ue_position[0])),
                     float(cfg.get("ue_y_m", base.ue_position[1]))),
        clock_bias=float(cfg.get("bias_m", base.clock_bias)),
        carrier_frequency=fc,
        bandwidth=float(cfg.get("bw_hz", base.bandwidth)),
        num_subcarriers=int(cfg.get("n_subcarriers", base.num_subcarriers)),
        num_antennas=int(cfg.get("n_antennas", base.num_antennas)),
        element_spacing=spacing,
        transmit_power=float(cfg.get("pt_mw", base.transmit_power)),
        noise_spectral=float(cfg.get("n0_mw_per_ghz", base.noise_spectral)),
        scatterers=tuple(scat),
    )


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "ue_x_m": s.ue_position[0],
        "ue_y_m": s.ue_position[1],
        "bias_m": s.clock_bias,
        "fc_hz": s.carrier_frequency,
        "bw_hz": s.bandwidth,
        "n_subcarriers": s.num_subcarriers,
        "n_antennas": s.num_antennas,
        "spacing_over_lambda": s.element_spacing / s.wavelength,
        "pt_mw": s.transmit_power,
        "n0_mw_per_ghz": s.noise_spectral,
        "scatterers": [
            {"x_m": sc.position[0], "y_m": sc.position[1], "rcs_m2": sc.radar_cross_section}
            for sc in s.scatterers
        ],
    }


def load_config(path: str | Path) -> dict:
    """Read a YAML or JSON config file into a dict."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        return json.loads(text)
    import yaml

    return yaml.safe_load(text) or {}


def load_scenario(path: str | Path) -> Scenario:
    cfg = load_config(path)
    return scenario_from_dict(cfg.get("scenario", cfg))
