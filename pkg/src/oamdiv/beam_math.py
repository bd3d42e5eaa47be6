"""Closed-form Laguerre-Gaussian beam quantities.

All lengths are in meters, angles in radians. Every function depends on the
azimuthal index only through ``|ell|``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedModeError

#: Angles above this value trigger a :class:`ParaxialityWarning`.
PARAXIAL_LIMIT = 0.1


class ParaxialityWarning(UserWarning):
    """A returned angle is too large for the paraxial formulas to be trusted."""


def _check_paraxial(angle):
    if np.any(np.abs(angle) > PARAXIAL_LIMIT):
        warnings.warn(
            f"angle {np.max(np.abs(angle)):.3g} rad exceeds the paraxial limit "
            f"{PARAXIAL_LIMIT} rad",
            ParaxialityWarning,
            stacklevel=3,
        )
    return angle


@dataclass(frozen=True)
class LGModeSpec:
    """Indices and waist of one Laguerre-Gaussian mode."""

    ell: int
    p: int = 0
    w0: float = 1e-3

    def __post_init__(self):
        if int(self.ell) != self.ell or int(self.p) != self.p:
            raise ValueError("ell and p must be integers")
        if self.p < 0:
            raise ValueError(f"radial index p must be >= 0, got {self.p}")
        if not self.w0 > 0:
            raise ValueError(f"waist w0 must be positive, got {self.w0}")


@dataclass(frozen=True)
class BeamGeometry:
    """Wavelength-dependent constants of a beam with a given waist.

    Use :meth:`from_waist` rather than filling the fields by hand.
    """

    wavelength: float
    k0: float
    zR: float

    @classmethod
    def from_waist(cls, wavelength: float, w0: float) -> "BeamGeometry":
        if not wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {wavelength}")
        if not w0 > 0:
            raise ValueError(f"waist w0 must be positive, got {w0}")
        k0 = 2 * math.pi / wavelength
        return cls(wavelength=wavelength, k0=k0, zR=0.5 * k0 * w0**2)

    @property
    def w0(self) -> float:
        return math.sqrt(2 * self.zR / self.k0)

    def width(self, z):
        return beam_width(self.w0, z, self.zR)

    def gouy(self, z):
        return np.arctan(np.asarray(z) / self.zR)

    def curvature(self, z):
        """Inverse radius of curvature 1/R(z); zero at the waist."""
        z = np.asarray(z, dtype=float)
        return z / (z**2 + self.zR**2)


def beam_width(w0, z, zR):
    """Gaussian beam radius ``w(z) = w0 sqrt(1 + z^2/zR^2)``."""
    if not w0 > 0 or not zR > 0:
        raise ValueError(f"w0 and zR must be positive, got w0={w0}, zR={zR}")
    return w0 * np.sqrt(1 + (np.asarray(z, dtype=float) / zR) ** 2)


def genlaguerre(p: int, alpha: float, x):
    """Generalized Laguerre polynomial ``L_p^alpha(x)`` by upward recurrence in p."""
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if p == 0:
        return prev
    cur = 1 + alpha - x
    for n in range(1, p):
        prev, cur = cur, ((2 * n + 1 + alpha - x) * cur - (n + alpha) * prev) / (n + 1)
    return cur


def intensity_lg(mode: LGModeSpec, r, z, geom: BeamGeometry):
    """Normalized intensity of a p = 0 LG mode at radius ``r`` and plane ``z``.

    Integrates to one over the transverse plane. Modes with ``p > 0`` are
    rejected.
    """
    if mode.p != 0:
        raise UnsupportedModeError(f"closed-form intensity is for p = 0 only, got p={mode.p}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    m = abs(mode.ell)
    w = beam_width(mode.w0, z, geom.zR)
    u = 2 * r**2 / w**2
    # log form keeps u**m / m! finite for large |ell|
    with np.errstate(divide="ignore"):
        log_u = np.where(u > 0, np.log(np.where(u > 0, u, 1.0)), -np.inf)
    log_term = (m * log_u - math.lgamma(m + 1) if m else 0.0) - u
    return 2 / (math.pi * w**2) * np.exp(log_term)


def radius_peak_intensity(ell: int, w_at_z):
    """Radius of maximum intensity of a p = 0 mode, zero for ``ell = 0``."""
    return math.sqrt(abs(ell) / 2) * w_at_z


def radius_rms(ell: int, w_at_z):
    """Intensity-weighted rms radius of a p = 0 mode."""
    return math.sqrt((abs(ell) + 1) / 2) * w_at_z


def radius_ratio(ell: int) -> float:
    """Ratio ``r_rms / r(I_max)``; tends to 1 for large ``|ell|``."""
    if ell == 0:
        raise ValueError("radius ratio is undefined for ell = 0 (r(I_max) = 0)")
    m = abs(ell)
    return math.sqrt((m + 1) / m)


def divergence_fixed_waist(ell: int, w0, wavelength):
    """Far-field rms half-angle of a p = 0 mode with waist ``w0``.

    ``sqrt((|ell|+1)/2) * lambda / (pi w0)``, i.e. ``sqrt((|ell|+1)/2) * w0 / zR``,
    the large-z limit of :func:`divergence_local`. Grows as ``sqrt(|ell|+1)``.
    """
    if not w0 > 0 or not wavelength > 0:
        raise ValueError("w0 and wavelength must be positive")
    return _check_paraxial(math.sqrt((abs(ell) + 1) / 2) * wavelength / (math.pi * w0))


def divergence_local(ell: int, geom: BeamGeometry, w0, z):
    """Local divergence angle ``arctan(d r_rms / dz)`` at plane ``z``."""
    z = np.asarray(z, dtype=float)
    w = beam_width(w0, z, geom.zR)
    slope = math.sqrt((abs(ell) + 1) / 2) * (w0**2 / geom.zR**2) * (z / w)
    return _check_paraxial(np.arctan(slope))


def divergence_fixed_rms(ell: int, r_rms0, k0):
    """Far-field angle ``(|ell|+1) / (k0 r_rms0)`` at fixed waist-plane rms radius."""
    if not r_rms0 > 0:
        raise ValueError(f"r_rms0 must be positive, got {r_rms0}")
    return _check_paraxial((abs(ell) + 1) / (k0 * r_rms0))


def waist_for_fixed_rms(ell: int, r_rms0):
    """Waist giving a p = 0 mode the waist-plane rms radius ``r_rms0``."""
    if not r_rms0 > 0:
        raise ValueError(f"r_rms0 must be positive, got {r_rms0}")
    return r_rms0 * math.sqrt(2 / (abs(ell) + 1))


def skew_angle(ell: int, r, k0):
    """Angle ``|ell| / (k0 r)`` between the local Poynting vector and the axis."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("skew angle is singular on axis; r must be > 0")
    return _check_paraxial(abs(ell) / (k0 * r))


@dataclass(frozen=True)
class RadialMoments:
    """Power and radii extracted from a sampled field.

    ``r_rms`` is the intensity-weighted rms radius about the beam axis and
    ``r_imax`` the radius of the azimuthally averaged intensity maximum. For
    angular-spectrum fields both are angles in radians.
    """

    power: float
    r_rms: float
    r_imax: float
