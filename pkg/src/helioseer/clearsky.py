"""Solar geometry and the Ineichen-Perez clear-sky GHI model.

The solar position uses the low-precision almanac formulation (mean anomaly
and ecliptic longitude from days since J2000); against a full ephemeris the
zenith error is a few hundredths of a degree for 1950-2050.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass

import numpy as np

from .geogrid import (GridSpec, Field, FieldStack, UNITS_WM2, HOUR, to_epoch, to_datetime,
                      GridError)

SOLAR_CONSTANT = 1367.7
DEFAULT_TL = 3.0
AIRMASS_MODELS = ("secant", "kasten_young")
# The exp(0.01 am^1.8) enhancement grows without bound as the secant air mass
# diverges at the horizon; its air mass is capped near the real horizon value.
ENHANCEMENT_AIRMASS_CAP = 38.0


class SunBelowHorizon(ValueError):
    """The zenith angle is >= 90 degrees; irradiance is zero."""


@dataclass
class SolarPosition:
    zenith: np.ndarray           # degrees
    declination: np.ndarray      # degrees
    hour_angle: np.ndarray       # degrees
    equation_of_time: np.ndarray  # minutes


@dataclass
class ClearSkyParams:
    elevation: float = 0.0
    linke_turbidity: float = DEFAULT_TL

    @property
    def cg1(self):
        return 5.09e-5 * self.elevation + 0.868

    @property
    def cg2(self):
        return 3.92e-5 * self.elevation + 0.0387

    @property
    def fh1(self):
        return np.exp(-self.elevation / 8000.0)

    @property
    def fh2(self):
        return np.exp(-self.elevation / 1250.0)


def _time_parts(t):
    """Vectorized (doy, fractional hour, days in year) for epoch seconds."""
    t = np.asarray(t, dtype=np.int64)
    days = t // 86400
    sec_of_day = t - days * 86400
    dates = days.astype("datetime64[D]")
    years = dates.astype("datetime64[Y]")
    doy = (dates - years).astype(np.int64) + 1
    year = years.astype(np.int64) + 1970
    leap = ((year % 4 == 0) & (year % 100 != 0)) | (year % 400 == 0)
    return doy, sec_of_day / 3600.0, np.where(leap, 366.0, 365.0)


def _as_epoch_array(t):
    if isinstance(t, np.ndarray) and np.issubdtype(t.dtype, np.integer):
        return t.astype(np.int64)
    if np.ndim(t) == 0:
        return np.int64(to_epoch(t))
    return np.asarray([to_epoch(x) for x in t], dtype=np.int64)


def _spencer(lat, lon, te):
    doy, hour, ndays = _time_parts(te)
    gamma = 2.0 * np.pi / ndays * (doy - 1 + (hour - 12.0) / 24.0)
    eot = 229.18 * (0.000075 + 0.001868 * np.cos(gamma) - 0.032077 * np.sin(gamma)
                    - 0.014615 * np.cos(2 * gamma) - 0.040849 * np.sin(2 * gamma))
    decl = (0.006918 - 0.399912 * np.cos(gamma) + 0.070257 * np.sin(gamma)
            - 0.006758 * np.cos(2 * gamma) + 0.000907 * np.sin(2 * gamma)
            - 0.002697 * np.cos(3 * gamma) + 0.00148 * np.sin(3 * gamma))
    return np.degrees(decl), eot, hour


def _almanac(lat, lon, te):
    # low-precision solar coordinates from days since J2000.0 (valid ~1950-2050)
    _, hour, _ = _time_parts(te)
    n = (np.asarray(te, dtype=np.float64) - 946728000.0) / 86400.0
    g = np.radians((357.529 + 0.98560028 * n) % 360.0)
    q = (280.459 + 0.98564736 * n) % 360.0
    ecl_lon = np.radians(q + 1.915 * np.sin(g) + 0.020 * np.sin(2 * g))
    obliq = np.radians(23.439 - 0.00000036 * n)
    ra = np.degrees(np.arctan2(np.cos(obliq) * np.sin(ecl_lon), np.cos(ecl_lon)))
    decl = np.degrees(np.arcsin(np.sin(obliq) * np.sin(ecl_lon)))
    eot = ((q - ra + 180.0) % 360.0 - 180.0) * 4.0
    return decl, eot, hour


SOLAR_POSITION_METHODS = ("almanac", "spencer")


def solar_position(lat, lon, t, method: str = "almanac") -> SolarPosition:
    """Solar zenith, declination, hour angle and equation of time.

    ``lat``/``lon`` in degrees (east positive) and ``t`` as epoch seconds,
    datetime or ISO string; all arguments broadcast. ``method="spencer"``
    selects the fractional-year Fourier series (cheaper, ~0.5 deg worst case).
    """
    lat = np.asarray(lat, dtype=np.float64)
    if np.any(np.abs(lat) > 90):
        raise ValueError("latitude must lie in [-90, 90]")
    lon = np.asarray(lon, dtype=np.float64)
    te = _as_epoch_array(t)
    if method == "almanac":
        decl, eot, hour = _almanac(lat, lon, te)
    elif method == "spencer":
        decl, eot, hour = _spencer(lat, lon, te)
    else:
        raise ValueError(f"unknown solar position method {method!r}")
    hour_angle = (hour * 60.0 + eot + 4.0 * lon) / 4.0 - 180.0
    phi = np.radians(lat)
    d = np.radians(decl)
    cosz = np.sin(phi) * np.sin(d) + np.cos(phi) * np.cos(d) * np.cos(np.radians(hour_angle))
    zenith = np.degrees(np.arccos(np.clip(cosz, -1.0, 1.0)))
    return SolarPosition(zenith, decl, hour_angle, eot)


def solar_zenith(lat, lon, t) -> SolarPosition:
    return solar_position(lat, lon, t)


def airmass(z, model: str = "secant"):
    """Relative air mass; ``secant`` is the plain 1/cos(z) form."""
    z = float(z)
    if z >= 90.0:
        raise SunBelowHorizon(f"zenith {z} deg: sun below horizon")
    return float(_airmass(np.float64(z), model))


def _airmass(z, model):
    if model == "secant":
        return 1.0 / np.cos(np.radians(z))
    if model == "kasten_young":
        return 1.0 / (np.cos(np.radians(z)) + 0.50572 * (96.07995 - z) ** -1.6364)
    raise ValueError(f"unknown air-mass model {model!r}; choose from {AIRMASS_MODELS}")


def extraterrestrial(doy):
    """Extraterrestrial irradiance in W/m2 for a day of year (365-day period)."""
    return SOLAR_CONSTANT * (1.0 + 0.033 * np.cos(2.0 * np.pi / 365.0 * np.asarray(doy, np.float64)))


def ghi_from_zenith(zenith, doy, elevation=0.0, turbidity=DEFAULT_TL, airmass_model="secant"):
    """Vectorized Ineichen-Perez GHI given the zenith angle; 0 when z >= 90."""
    z = np.asarray(zenith, dtype=np.float64)
    h = np.asarray(elevation, dtype=np.float64)
    tl = np.asarray(turbidity, dtype=np.float64)
    day = z < 90.0
    zs = np.where(day, z, 0.0)
    am = _airmass(zs, airmass_model)
    i0 = extraterrestrial(doy)
    cg1 = 5.09e-5 * h + 0.868
    cg2 = 3.92e-5 * h + 0.0387
    fh1 = np.exp(-h / 8000.0)
    fh2 = np.exp(-h / 1250.0)
    ghi = (cg1 * i0 * np.cos(np.radians(zs)) * np.exp(-cg2 * am * (fh1 + fh2 * (tl - 1.0)))
           * np.exp(0.01 * np.minimum(am, ENHANCEMENT_AIRMASS_CAP) ** 1.8))
    return np.where(day, np.maximum(ghi, 0.0), 0.0)


def _check_params(elevation, turbidity):
    if np.any(np.asarray(turbidity) < 1):
        raise ValueError("Linke turbidity must be >= 1")
    if np.any(np.asarray(elevation) < -430):
        raise ValueError("elevation below -430 m")


def ineichen_perez(lat, lon, t, elevation=0.0, turbidity=DEFAULT_TL, airmass_model="secant"):
    """Clear-sky GHI (W/m2) at a location and time. Broadcasts over arrays."""
    _check_params(elevation, turbidity)
    te = _as_epoch_array(t)
    pos = solar_position(lat, lon, te)
    doy, _, _ = _time_parts(te)
    out = ghi_from_zenith(pos.zenith, doy, elevation, turbidity, airmass_model)
    return float(out) if out.ndim == 0 else out


def _resolve_turbidity(turbidity, grid: GridSpec, t: int):
    """Turbidity for one hour: scalar, per-cell field/array, or 12 monthly frames."""
    if isinstance(turbidity, Field):
        if not turbidity.grid.same_as(grid):
            raise GridError("turbidity grid does not match target grid")
        return turbidity.values.astype(np.float64)
    tl = np.asarray(turbidity, dtype=np.float64)
    if tl.ndim == 3:
        if tl.shape != (12,) + grid.shape:
            raise GridError(f"monthly turbidity must be (12, {grid.n_lat}, {grid.n_lon})")
        return tl[to_datetime(t).month - 1]
    return tl


def _resolve_elevation(elevation, grid: GridSpec):
    if elevation is None:
        return np.float64(0.0)
    if isinstance(elevation, Field):
        if not elevation.grid.same_as(grid):
            raise GridError("elevation grid does not match target grid")
        return elevation.values.astype(np.float64)
    h = np.asarray(elevation, dtype=np.float64)
    if h.ndim == 2 and h.shape != grid.shape:
        raise GridError(f"elevation shape {h.shape} does not match grid {grid.shape}")
    return h


def clearsky_stack(grid: GridSpec, t0, horizon_hours: int, elevation=None,
                   turbidity=DEFAULT_TL, first_lead: int = 1,
                   airmass_model: str = "secant") -> FieldStack:
    """Clear-sky GHI on every cell for hours ``t0+first_lead ... t0+first_lead+horizon-1``."""
    if horizon_hours < 1:
        raise ValueError("horizon_hours must be >= 1")
    h = _resolve_elevation(elevation, grid)
    t0 = to_epoch(t0)
    times = t0 + HOUR * (first_lead + np.arange(horizon_hours, dtype=np.int64))
    lat, lon = grid.mesh()
    out = np.empty((horizon_hours,) + grid.shape, dtype=np.float32)
    for k, t in enumerate(times):
        tl = _resolve_turbidity(turbidity, grid, int(t))
        _check_params(h, tl)
        pos = solar_position(lat, lon, np.full(grid.shape, t, dtype=np.int64))
        doy, _, _ = _time_parts(np.int64(t))
        out[k] = ghi_from_zenith(pos.zenith, doy, h, tl, airmass_model)
    return FieldStack(grid, times, out, UNITS_WM2)


def zenith_stack(grid: GridSpec, times) -> np.ndarray:
    """(T, n_lat, n_lon) zenith angles in degrees for the given epoch times."""
    lat, lon = grid.mesh()
    return np.stack([solar_position(lat, lon, np.full(grid.shape, int(t), dtype=np.int64)).zenith
                     for t in np.asarray(times)])


def days_in_year(year: int) -> int:
    return 366 if calendar.isleap(year) else 365
