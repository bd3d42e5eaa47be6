"""Complex scalar fields sampled on square grids.

The beam axis sits on the pixel center with index ``n // 2`` along both axes,
so grid coordinates are ``(i - n // 2) * dx``. Fields are immutable; every
operation returns a new :class:`SampledField`.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.ndimage import map_coordinates

from .beam_math import BeamGeometry, LGModeSpec, RadialMoments
from .errors import DegenerateFieldError, GridMismatchError, GridResolutionError

MAGIC = b"OAMF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIddd")

# beyond r^2/w^2 = 700 the Gaussian factor underflows double precision
_UNDERFLOW = 700.0


@dataclass(frozen=True)
class GridSpec:
    """Square sampling grid of ``n`` points over a full side length ``extent``.

    ``coverage`` and ``sampling`` configure the synthesis guards: the extent
    must be at least ``coverage`` rms radii and the pitch at most
    ``w / sampling``.
    """

    n: int
    extent: float
    coverage: float = 8.0
    sampling: float = 8.0

    def __post_init__(self):
        if self.n < 64 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 64, got {self.n}")
        if not self.extent > 0:
            raise ValueError(f"grid extent must be positive, got {self.extent}")

    @property
    def dx(self) -> float:
        return self.extent / self.n

    def check(self, r_rms: float, width: float) -> None:
        """Raise :class:`GridResolutionError` if a beam of this size is badly sampled."""
        if self.extent < self.coverage * r_rms:
            raise GridResolutionError(
                "coverage",
                f"extent {self.extent:.4g} m < {self.coverage:g} x r_rms = {self.coverage * r_rms:.4g} m",
            )
        if self.dx > width / self.sampling:
            raise GridResolutionError(
                "sampling",
                f"pitch {self.dx:.4g} m > w / {self.sampling:g} = {width / self.sampling:.4g} m",
            )


@dataclass(frozen=True, eq=False)
class SampledField:
    """Complex amplitudes on an ``n x n`` grid at plane ``z``.

    ``domain`` is ``"space"`` (pitch in meters) or ``"angle"`` (far-field
    pitch in radians).
    """

    values: np.ndarray
    dx: float
    z: float
    wavelength: float
    domain: str = "space"

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"field must be a square 2-D array, got shape {values.shape}")
        n = values.shape[0]
        if n < 64 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 64, got {n}")
        if not self.dx > 0:
            raise ValueError(f"pitch must be positive, got {self.dx}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def extent(self) -> float:
        return self.n * self.dx

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def power(self) -> float:
        return float(self.intensity.sum() * self.dx**2)

    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    def coords(self):
        x = self.axis()
        return np.meshgrid(x, x)

    def with_values(self, values, **changes) -> "SampledField":
        return replace(self, values=values, **changes)


def grid_coords(grid: GridSpec):
    x = (np.arange(grid.n) - grid.n // 2) * grid.dx
    return np.meshgrid(x, x)


def lg_rms_radius(ell: int, p: int, w) -> float:
    """rms radius of a general LG_{ell,p} mode, used by the coverage guard."""
    return math.sqrt((2 * p + abs(ell) + 1) / 2) * w


def _geometry_for(mode: LGModeSpec, geom: BeamGeometry) -> BeamGeometry:
    own = BeamGeometry.from_waist(geom.wavelength, mode.w0)
    if not math.isclose(own.zR, geom.zR, rel_tol=1e-9):
        raise ValueError(
            f"geometry zR={geom.zR:.6g} m does not belong to waist w0={mode.w0:.6g} m "
            f"(expected zR={own.zR:.6g} m)"
        )
    return own


def _lg_radial_iter(ell: int, p_max: int, w0: float, geom: BeamGeometry, X, Y, z: float):
    """Yield complex LG_{ell,p} amplitudes for p = 0..p_max on coordinates X, Y.

    Shares one Laguerre recurrence across p.
    """
    m = abs(ell)
    w = float(geom.width(z))
    r2 = X**2 + Y**2
    s = r2 / w**2
    inside = s <= _UNDERFLOW
    x = 2 * s
    with np.errstate(divide="ignore"):
        log_rho = np.where(r2 > 0, 0.5 * np.log(np.where(r2 > 0, x, 1.0)), -np.inf)
    log_base = (m * log_rho if m else 0.0) - s - math.log(w)
    log_base = np.where(inside, log_base, -np.inf)
    phase = ell * np.arctan2(Y, X) + 0.5 * geom.k0 * r2 * float(geom.curvature(z))
    psi = float(geom.gouy(z))

    prev = None
    cur = np.ones_like(x)
    for p in range(p_max + 1):
        if p == 1:
            prev, cur = cur, 1 + m - x
        elif p > 1:
            n = p - 1
            prev, cur = cur, ((2 * n + 1 + m - x) * cur - (n + m) * prev) / (n + 1)
        log_norm = 0.5 * (math.log(2 / math.pi) + math.lgamma(p + 1) - math.lgamma(p + m + 1))
        amp = np.exp(log_base + log_norm) * np.where(inside, cur, 0.0)
        yield p, amp * np.exp(1j * (phase - (2 * p + m + 1) * psi))


def synthesize_lg(mode: LGModeSpec, geom: BeamGeometry, grid: GridSpec, z: float = 0.0) -> SampledField:
    """Sample the normalized LG_{ell,p} field at plane ``z`` (waist at z = 0).

    Includes the helical phase ``exp(i ell phi)``, wavefront curvature and the
    Gouy phase ``(2p + |ell| + 1) arctan(z / zR)``; the carrier ``exp(ikz)`` is
    omitted.

    Raises
    ------
    GridResolutionError
        If the grid does not cover 8 rms radii or under-samples ``w(z)``
        (factors configurable on the :class:`GridSpec`).
    """
    geom = _geometry_for(mode, geom)
    w = float(geom.width(z))
    grid.check(lg_rms_radius(mode.ell, mode.p, w), w)
    X, Y = grid_coords(grid)
    values = None
    for _, values in _lg_radial_iter(mode.ell, mode.p, mode.w0, geom, X, Y, z):
        pass
    return SampledField(values, grid.dx, z, geom.wavelength)


def lg_basis(
    ell: int, p_max: int, w0: float, like: SampledField, z: float | None = None, check: bool = True
) -> Iterator[tuple[int, SampledField]]:
    """Iterate over LG_{ell,p} fields, p = 0..p_max, on the grid of ``like``.

    Guards are checked once, for the widest mode ``p_max``.
    """
    geom = BeamGeometry.from_waist(like.wavelength, w0)
    z = like.z if z is None else z
    if check:
        check_basis_grid(ell, p_max, w0, like, z)
    X, Y = like.coords()
    for p, values in _lg_radial_iter(ell, p_max, w0, geom, X, Y, z):
        yield p, SampledField(values, like.dx, like.z, like.wavelength)


def check_basis_grid(ell: int, p: int, w0: float, like: SampledField, z: float | None = None) -> None:
    """Apply the synthesis guards for LG_{ell,p} of waist ``w0`` on the grid of ``like``."""
    geom = BeamGeometry.from_waist(like.wavelength, w0)
    w = float(geom.width(like.z if z is None else z))
    GridSpec(like.n, like.extent).check(lg_rms_radius(ell, p, w), w)


def synthesize_gaussian(w0: float, grid: GridSpec, wavelength: float) -> SampledField:
    """Fundamental Gaussian with waist ``w0`` in its waist plane, unit power."""
    return synthesize_lg(LGModeSpec(0, 0, w0), BeamGeometry.from_waist(wavelength, w0), grid, 0.0)


def apply_spiral_phase(field: SampledField, ell: int) -> SampledField:
    """Multiply by ``exp(i ell phi)`` about the beam axis.

    The on-axis sample keeps its value since ``atan2(0, 0) = 0``.
    """
    if ell == 0:
        return field.with_values(field.values)
    X, Y = field.coords()
    return field.with_values(field.values * np.exp(1j * ell * np.arctan2(Y, X)))


def _check_compatible(a: SampledField, b: SampledField) -> None:
    if (
        a.n != b.n
        or not math.isclose(a.dx, b.dx, rel_tol=1e-12)
        or not math.isclose(a.wavelength, b.wavelength, rel_tol=1e-12)
        or a.domain != b.domain
        or not (a.z == b.z or math.isclose(a.z, b.z, rel_tol=1e-12, abs_tol=1e-15))
    ):
        raise GridMismatchError(
            f"fields differ: n {a.n}/{b.n}, dx {a.dx:.6g}/{b.dx:.6g}, z {a.z:.6g}/{b.z:.6g}, "
            f"wavelength {a.wavelength:.6g}/{b.wavelength:.6g}, domain {a.domain}/{b.domain}"
        )


def superpose(fields: Sequence[SampledField], coefficients: Sequence[complex]) -> SampledField:
    """Linear combination ``sum_i c_i f_i`` without renormalization."""
    if len(fields) == 0 or len(fields) != len(coefficients):
        raise ValueError("need one coefficient per field and at least one field")
    for other in fields[1:]:
        _check_compatible(fields[0], other)
    total = np.zeros_like(fields[0].values)
    for f, c in zip(fields, coefficients):
        total = total + c * f.values
    return fields[0].with_values(total)


def overlap(a: SampledField, b: SampledField) -> complex:
    """Inner product ``<a|b> = sum conj(a) b dx^2``."""
    _check_compatible(a, b)
    return complex(np.vdot(a.values, b.values) * a.dx**2)


def radial_profile(field: SampledField):
    """Azimuthally averaged intensity in bins of width ``dx``.

    Returns ``(r, I)`` where ``r`` is the mean radius of the pixels in each
    bin. Only full annuli (r <= extent / 2) are kept.
    """
    X, Y = field.coords()
    r = np.hypot(X, Y)
    idx = np.floor(r / field.dx + 0.5).astype(int)
    nbins = field.n // 2 + 1
    keep = idx < nbins
    counts = np.bincount(idx[keep], minlength=nbins)
    r_sum = np.bincount(idx[keep], weights=r[keep], minlength=nbins)
    i_sum = np.bincount(idx[keep], weights=field.intensity[keep], minlength=nbins)
    return r_sum / counts, i_sum / counts


def _peak_radius(r, profile) -> float:
    k = int(np.argmax(profile))
    if k == 0:
        return 0.0
    if k == len(profile) - 1:
        return float(r[k])
    a, b, _ = np.polyfit(r[k - 1 : k + 2], profile[k - 1 : k + 2], 2)
    if a >= 0:
        return float(r[k])
    return float(np.clip(-b / (2 * a), r[k - 1], r[k + 1]))


def measure_moments(field: SampledField) -> RadialMoments:
    """Power, rms radius about the axis and peak radius of the azimuthal average."""
    intensity = field.intensity
    total = intensity.sum()
    if not total > 0:
        raise DegenerateFieldError("field has zero power")
    X, Y = field.coords()
    r_rms = math.sqrt(float((intensity * (X**2 + Y**2)).sum() / total))
    r, profile = radial_profile(field)
    return RadialMoments(float(total * field.dx**2), r_rms, _peak_radius(r, profile))


@dataclass(frozen=True)
class SkewMeasurement:
    """Skew angle measured on a circle.

    ``low_intensity`` is set when the azimuthally averaged intensity on the
    circle is below 1% of the profile maximum, where the phase gradient is
    poorly conditioned.
    """

    angle: float
    radius: float
    relative_intensity: float
    low_intensity: bool


def _sample_circle(arrays, field: SampledField, r: float, n_samples: int):
    phi = 2 * math.pi * np.arange(n_samples) / n_samples
    col = field.n // 2 + r * np.cos(phi) / field.dx
    row = field.n // 2 + r * np.sin(phi) / field.dx
    return phi, [map_coordinates(a, [row, col], order=3, mode="nearest") for a in arrays]


def _spectral_gradient(field: SampledField):
    n = field.n
    k = 2 * math.pi * sfft.fftfreq(n, field.dx)
    u_hat = sfft.fft2(field.values)
    dudx = sfft.ifft2(u_hat * (1j * k)[None, :])
    dudy = sfft.ifft2(u_hat * (1j * k)[:, None])
    return dudx, dudy


def local_skew_angle(field: SampledField, r: float, n_samples: int = 720) -> SkewMeasurement:
    """Azimuthal phase gradient on the circle of radius ``r``, divided by ``k0``.

    The transverse current ``Im(conj(u) grad u)`` is computed with spectral
    derivatives and its azimuthal component averaged with intensity weights.
    """
    if r <= 2 * field.dx or r >= field.extent / 2 - 2 * field.dx:
        raise ValueError(f"radius {r:.4g} must lie in (2 dx, extent/2 - 2 dx)")
    u = field.values
    dudx, dudy = _spectral_gradient(field)
    jx = np.imag(np.conj(u) * dudx)
    jy = np.imag(np.conj(u) * dudy)
    phi, (jx_c, jy_c, i_c) = _sample_circle([jx, jy, field.intensity], field, r, n_samples)
    j_phi = -np.sin(phi) * jx_c + np.cos(phi) * jy_c
    mean_i = float(i_c.mean())
    if mean_i <= 0:
        return SkewMeasurement(0.0, r, 0.0, True)
    k_phi = float(j_phi.sum() / i_c.sum())
    _, profile = radial_profile(field)
    rel = mean_i / float(profile.max())
    return SkewMeasurement(k_phi / field.k0, r, rel, rel < 0.01)


def winding_number(field: SampledField, r: float, n_samples: int = 720) -> int:
    """Net number of 2 pi phase windings of the field around the circle of radius ``r``."""
    _, (re, im) = _sample_circle([field.values.real, field.values.imag], field, r, n_samples)
    u = re + 1j * im
    steps = np.angle(np.roll(u, -1) * np.conj(u))
    return int(round(steps.sum() / (2 * math.pi)))


def write_field(path, field: SampledField) -> None:
    """Write the little-endian ``OAMF`` binary dump of a field."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, field.n, field.dx, field.z, field.wavelength)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes())


def read_field(path) -> SampledField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, dx, z, wavelength = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    body = raw[_HEADER.size :]
    if len(body) != 16 * n * n:
        raise ValueError(f"{path}: expected {16 * n * n} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<c16").reshape(n, n)
    return SampledField(values, dx, z, wavelength)


def write_intensity_csv(path, field: SampledField) -> None:
    """Export ``x, y, I`` rows, row-major, 12 significant digits."""
    x = field.axis()
    intensity = field.intensity
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "y", "I"])
        for j, y in enumerate(x):
            for i, xx in enumerate(x):
                out.writerow([f"{xx:.12g}", f"{y:.12g}", f"{intensity[j, i]:.12g}"])
