"""Two-body orbit model: TLE parsing, element conversion, propagation, visibility.

Frame convention: Earth-centred inertial, x toward the vernal equinox and z
along the spin axis. All lengths in km, times in s, angles in rad.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import (
    ChecksumMismatch,
    LineLength,
    MalformedField,
    NoConvergence,
    TimestampMismatch,
)

TWO_PI = 2.0 * math.pi
SECONDS_PER_DAY = 86400.0

KEPLER_TOL = 1e-12
KEPLER_MAX_ITER = 50


@dataclass(frozen=True)
class EarthModel:
    mu_km3_s2: float = 398600.4418
    earth_radius_km: float = 6371.0
    rotation_rad_s: float = 7.2921159e-5

    def __post_init__(self):
        if not self.mu_km3_s2 > 0 or not self.earth_radius_km > 0:
            raise ValueError("EarthModel constants must be positive")


EARTH = EarthModel()


@dataclass(frozen=True)
class KeplerianElements:
    semi_major_axis_km: float
    eccentricity: float
    inclination_rad: float
    raan_rad: float
    arg_perigee_rad: float
    mean_anomaly_rad: float
    epoch_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eccentricity < 1.0:
            raise ValueError(f"eccentricity must be in [0, 1), got {self.eccentricity}")
        if not self.semi_major_axis_km > 0:
            raise ValueError("semi-major axis must be positive")
        for name in ("inclination_rad", "raan_rad", "arg_perigee_rad", "mean_anomaly_rad"):
            object.__setattr__(self, name, getattr(self, name) % TWO_PI)

    def validate(self, earth: EarthModel = EARTH) -> None:
        if self.semi_major_axis_km <= earth.earth_radius_km:
            raise ValueError(
                f"semi-major axis {self.semi_major_axis_km} km is inside the Earth"
            )

    def period_s(self, earth: EarthModel = EARTH) -> float:
        return TWO_PI * math.sqrt(self.semi_major_axis_km**3 / earth.mu_km3_s2)


@dataclass(frozen=True)
class StateVector:
    position_km: np.ndarray
    velocity_km_s: np.ndarray
    t_s: float = 0.0

    def __post_init__(self):
        for name in ("position_km", "velocity_km_s"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def radius_km(self) -> float:
        return float(np.linalg.norm(self.position_km))

    def specific_energy(self, earth: EarthModel = EARTH) -> float:
        v2 = float(self.velocity_km_s @ self.velocity_km_s)
        return 0.5 * v2 - earth.mu_km3_s2 / self.radius_km

    def angular_momentum(self) -> np.ndarray:
        return np.cross(self.position_km, self.velocity_km_s)


# ---------------------------------------------------------------------------
# TLE handling


def tle_checksum(line: str) -> int:
    """Mod-10 checksum over the first 68 columns ('-' counts as 1)."""
    total = 0
    for c in line[:68]:
        if c.isdigit():
            total += int(c)
        elif c == "-":
            total += 1
    return total % 10


def _field(line: str, start: int, stop: int, name: str, conv=float):
    raw = line[start:stop].strip()
    try:
        return conv(raw)
    except ValueError:
        raise MalformedField(f"{name}: cannot parse {raw!r}") from None


def _implied_decimal(raw: str) -> float:
    if not raw.isdigit():
        raise ValueError(raw)
    return float("0." + raw)


def _check_line(line: str, number: int) -> None:
    if len(line) != 69:
        raise LineLength(f"line {number} has {len(line)} characters, expected 69")
    if line[0] != str(number):
        raise MalformedField(f"line {number} must start with {number!r}, found {line[0]!r}")
    if not line[68].isdigit():
        raise MalformedField(f"line {number} checksum column is not a digit")
    expected = tle_checksum(line)
    if int(line[68]) != expected:
        raise ChecksumMismatch(
            f"line {number}: checksum {line[68]} != computed {expected}"
        )


def tle_epoch(line1: str) -> datetime:
    year = _field(line1, 18, 20, "epoch year", int)
    day = _field(line1, 20, 32, "epoch day")
    year += 2000 if year < 57 else 1900
    return datetime(year, 1, 1, tzinfo=timezone.utc) + timedelta(days=day - 1.0)


def parse_tle(
    line1: str,
    line2: str,
    earth: EarthModel = EARTH,
    reference: datetime | None = None,
) -> KeplerianElements:
    """Parse a two-line element set into osculating Keplerian elements.

    Mean elements are taken as osculating at epoch; no SGP4 theory is applied.
    ``epoch_s`` is measured from ``reference`` (the TLE's own epoch if None).
    """
    line1 = line1.rstrip("\r\n")
    line2 = line2.rstrip("\r\n")
    _check_line(line1, 1)
    _check_line(line2, 2)

    inc = _field(line2, 8, 16, "inclination")
    raan = _field(line2, 17, 25, "raan")
    ecc = _field(line2, 26, 33, "eccentricity", _implied_decimal)
    argp = _field(line2, 34, 42, "argument of perigee")
    mean_anom = _field(line2, 43, 51, "mean anomaly")
    rev_per_day = _field(line2, 52, 63, "mean motion")
    if rev_per_day <= 0:
        raise MalformedField(f"mean motion must be positive, got {rev_per_day}")

    n_rad_s = rev_per_day * TWO_PI / SECONDS_PER_DAY
    a = (earth.mu_km3_s2 / n_rad_s**2) ** (1.0 / 3.0)

    epoch_s = 0.0
    if reference is not None:
        epoch_s = (tle_epoch(line1) - reference).total_seconds()

    return KeplerianElements(
        semi_major_axis_km=a,
        eccentricity=float(ecc),
        inclination_rad=math.radians(inc),
        raan_rad=math.radians(raan),
        arg_perigee_rad=math.radians(argp),
        mean_anomaly_rad=math.radians(mean_anom),
        epoch_s=epoch_s,
    )


def mean_motion_rev_day(el: KeplerianElements, earth: EarthModel = EARTH) -> float:
    n = math.sqrt(earth.mu_km3_s2 / el.semi_major_axis_km**3)
    return n * SECONDS_PER_DAY / TWO_PI


def format_tle(
    el: KeplerianElements,
    satnum: int = 1,
    epoch: datetime | None = None,
    earth: EarthModel = EARTH,
    name: str | None = None,
) -> tuple[str, str]:
    """Render elements as a checksummed TLE pair (drag terms zeroed)."""
    epoch = epoch or datetime(2025, 1, 1, tzinfo=timezone.utc)
    start = datetime(epoch.year, 1, 1, tzinfo=epoch.tzinfo)
    day = (epoch - start).total_seconds() / SECONDS_PER_DAY + 1.0
    intl = (name or "00001A")[:8]
    body1 = (
        f"1 {satnum:05d}U {intl:<8} {epoch.year % 100:02d}{day:012.8f} "
        f" .00000000  00000-0  00000-0 0  999"
    )
    ecc = f"{el.eccentricity:.7f}"[2:]
    body2 = (
        f"2 {satnum:05d} {math.degrees(el.inclination_rad):8.4f} "
        f"{math.degrees(el.raan_rad):8.4f} {ecc} "
        f"{math.degrees(el.arg_perigee_rad):8.4f} {math.degrees(el.mean_anomaly_rad):8.4f} "
        f"{mean_motion_rev_day(el, earth):11.8f}    1"
    )
    lines = []
    for body in (body1, body2):
        body = body[:68].ljust(68)
        lines.append(body + str(tle_checksum(body)))
    return lines[0], lines[1]


def read_tle_file(path, earth: EarthModel = EARTH, reference: datetime | None = None):
    """Read a TLE text file (optional name lines) into a list of elements."""
    with open(path) as fh:
        lines = [ln.rstrip("\r\n") for ln in fh if ln.strip()]
    out = []
    i = 0
    while i < len(lines):
        if lines[i].startswith("1 ") and i + 1 < len(lines) and lines[i + 1].startswith("2 "):
            out.append(parse_tle(lines[i], lines[i + 1], earth, reference))
            i += 2
        else:
            i += 1  # title line
    return out


# ---------------------------------------------------------------------------
# Kepler's equation and state conversion


def solve_kepler(mean_anomaly: float, eccentricity: float) -> float:
    """Eccentric anomaly E with E - e sin E = M (Newton, bisection fallback)."""
    if not math.isfinite(mean_anomaly):
        raise NoConvergence(f"non-finite mean anomaly {mean_anomaly}")
    m = math.remainder(mean_anomaly, TWO_PI)
    e = eccentricity
    E = m if e < 0.8 else math.copysign(math.pi, m) if m else 0.0
    for _ in range(KEPLER_MAX_ITER):
        step = (E - e * math.sin(E) - m) / (1.0 - e * math.cos(E))
        E -= step
        if abs(step) < KEPLER_TOL:
            return E + (mean_anomaly - m)
    E = _bisect(lambda x: x - e * math.sin(x) - m, m - 1.0, m + 1.0)
    return E + (mean_anomaly - m)


def _bisect(func, lo: float, hi: float) -> float:
    flo = func(lo)
    if flo * func(hi) > 0:
        raise NoConvergence("Kepler solver could not bracket a root")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = func(mid)
        if (hi - lo) < KEPLER_TOL or fmid == 0.0:
            return mid
        if flo * fmid < 0:
            hi = mid
        else:
            lo, flo = mid, fmid
    raise NoConvergence("bisection exceeded its iteration cap")


def _perifocal_to_eci(raan: float, inc: float, argp: float) -> np.ndarray:
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    cw, sw = math.cos(argp), math.sin(argp)
    return np.array(
        [
            [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
            [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
            [sw * si, cw * si, ci],
        ]
    )


def elements_to_state(el: KeplerianElements, earth: EarthModel = EARTH) -> StateVector:
    el.validate(earth)
    a, e = el.semi_major_axis_km, el.eccentricity
    E = solve_kepler(el.mean_anomaly_rad, e)
    cE, sE = math.cos(E), math.sin(E)
    b_over_a = math.sqrt(1.0 - e * e)
    r = a * (1.0 - e * cE)
    pos_pf = np.array([a * (cE - e), a * b_over_a * sE, 0.0])
    vel_pf = math.sqrt(earth.mu_km3_s2 * a) / r * np.array([-sE, b_over_a * cE, 0.0])
    rot = _perifocal_to_eci(el.raan_rad, el.inclination_rad, el.arg_perigee_rad)
    return StateVector(rot @ pos_pf, rot @ vel_pf, el.epoch_s)


def propagate(state: StateVector, dt_s: float, earth: EarthModel = EARTH) -> StateVector:
    """Advance a bound two-body state by ``dt_s`` seconds.

    Uses Lagrange f/g coefficients with the eccentric-anomaly difference, so
    circular and near-circular orbits need no element singularity handling.
    """
    if not math.isfinite(dt_s):
        raise NoConvergence(f"non-finite dt {dt_s}")
    if dt_s == 0.0:
        return StateVector(state.position_km, state.velocity_km_s, state.t_s)
    mu = earth.mu_km3_s2
    r0v = state.position_km
    v0v = state.velocity_km_s
    r0 = float(np.linalg.norm(r0v))
    v0sq = float(v0v @ v0v)
    inv_a = 2.0 / r0 - v0sq / mu
    if inv_a <= 0:
        raise ValueError("state is not on a bound orbit")
    a = 1.0 / inv_a
    sqrt_a = math.sqrt(a)
    sigma0 = float(r0v @ v0v) / math.sqrt(mu)
    c1 = sigma0 / sqrt_a  # e sin E0
    c2 = 1.0 - r0 / a  # e cos E0

    # whole revolutions leave the state unchanged, so solve on the reduced angle
    m = math.remainder(math.sqrt(mu / a**3) * dt_s, TWO_PI)

    def kepler_diff(x):
        return x + c1 * (1.0 - math.cos(x)) - c2 * math.sin(x) - m

    x = m
    for _ in range(KEPLER_MAX_ITER):
        step = kepler_diff(x) / (1.0 + c1 * math.sin(x) - c2 * math.cos(x))
        x -= step
        if abs(step) < KEPLER_TOL:
            break
    else:
        x = _bisect(kepler_diff, m - 2.0, m + 2.0)

    cx, sx = math.cos(x), math.sin(x)
    f = 1.0 - a / r0 * (1.0 - cx)
    g = a * sigma0 / math.sqrt(mu) * (1.0 - cx) + r0 * math.sqrt(a / mu) * sx
    rv = f * r0v + g * v0v
    r = float(np.linalg.norm(rv))
    fdot = -math.sqrt(mu * a) / (r * r0) * sx
    gdot = 1.0 - a / r * (1.0 - cx)
    vv = fdot * r0v + gdot * v0v
    return StateVector(rv, vv, state.t_s + dt_s)


def state_at(el: KeplerianElements, t_s: float, earth: EarthModel = EARTH) -> StateVector:
    """State at absolute scenario time ``t_s`` by advancing the mean anomaly."""
    n = math.sqrt(earth.mu_km3_s2 / el.semi_major_axis_km**3)
    advanced = KeplerianElements(
        el.semi_major_axis_km,
        el.eccentricity,
        el.inclination_rad,
        el.raan_rad,
        el.arg_perigee_rad,
        el.mean_anomaly_rad + n * (t_s - el.epoch_s),
        t_s,
    )
    return elements_to_state(advanced, earth)


# ---------------------------------------------------------------------------
# Visibility


def _segment_clearance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum distance from the origin to segment(s) a-b; works row-wise."""
    d = b - a
    dd = np.einsum("...i,...i->...", d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(dd > 0, -np.einsum("...i,...i->...", a, d) / dd, 0.0)
    s = np.clip(s, 0.0, 1.0)
    closest = a + s[..., None] * d
    return np.linalg.norm(closest, axis=-1)


def line_of_sight(a: StateVector, b: StateVector, earth: EarthModel = EARTH) -> bool:
    """True iff the segment between the two satellites clears the Earth.

    For two satellites above the surface this is the same test as requiring
    the angle between -r_a and r_ab to exceed the tangent cone, except that a
    partner reached before the tangent point still counts as visible.
    """
    if a.t_s != b.t_s:
        raise TimestampMismatch(f"states at t={a.t_s} and t={b.t_s}")
    clearance = _segment_clearance(a.position_km, b.position_km)
    return bool(clearance > earth.earth_radius_km)


def visibility_matrix(positions: np.ndarray, earth: EarthModel = EARTH) -> np.ndarray:
    """Symmetric boolean N x N line-of-sight matrix (diagonal False)."""
    pos = np.asarray(positions, dtype=float)
    clearance = _segment_clearance(pos[:, None, :], pos[None, :, :])
    vis = clearance > earth.earth_radius_km
    np.fill_diagonal(vis, False)
    return vis


def tangent_angle_rad(radius_km: float, earth: EarthModel = EARTH) -> float:
    """Largest central angle at which two satellites at ``radius_km`` see each other."""
    return 2.0 * math.acos(earth.earth_radius_km / radius_km)
