"""Spiral-phase (forked grating) beams, their p-spectra, divergence and petals.

The forked grating is modeled by its first diffraction order: a pure phase
``exp(i ell phi)`` on a Gaussian illumination beam, with the grating carrier
removed.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from .beam_math import BeamGeometry, LGModeSpec, waist_for_fixed_rms
from .errors import PetalDetectionError
from .field import (
    GridSpec,
    SampledField,
    apply_spiral_phase,
    check_basis_grid,
    lg_basis,
    measure_moments,
    superpose,
    synthesize_gaussian,
    synthesize_lg,
)
from .propagation import DivergenceFit, far_field, fit_divergence

#: Default decomposition basis waist relative to the illumination waist.
BASIS_RATIO = 0.2
P_MAX = 16
P_LIMIT = 64


def make_kinoform_beam(ell: int, w0_illum: float, grid: GridSpec, wavelength: float) -> SampledField:
    """Gaussian illumination of waist ``w0_illum`` behind an ``ell``-fold spiral phase."""
    return apply_spiral_phase(synthesize_gaussian(w0_illum, grid, wavelength), ell)


@dataclass(frozen=True)
class PSpectrum:
    """Power of a helically phased field over LG_{ell,p}, p = 0..p_max."""

    ell: int
    basis_w0: float
    coefficients: tuple
    field_power: float = 1.0

    @property
    def p_max(self) -> int:
        return len(self.coefficients) - 1

    @property
    def weights(self) -> np.ndarray:
        return np.abs(np.array(self.coefficients)) ** 2 / self.field_power

    @property
    def remainder(self) -> float:
        return float(1.0 - self.weights.sum())

    def rows(self):
        rem = self.remainder
        for p, (c, wgt) in enumerate(zip(self.coefficients, self.weights)):
            yield self.ell, p, float(wgt), c.real, c.imag, rem


def decompose_p_spectrum(
    field: SampledField,
    ell: int,
    basis_w0: float,
    p_max: int = P_MAX,
    *,
    target_remainder: float | None = None,
    p_limit: int = P_LIMIT,
) -> PSpectrum:
    """Project ``field`` onto LG_{ell,p} modes of waist ``basis_w0``.

    ``c_p = <LG_{ell,p}|field>``. With ``target_remainder`` the basis is doubled
    from ``p_max`` until the unexplained power drops below the target or
    ``p_limit`` is reached. Warns when more than 5% of the power is left.
    """
    if p_max < 0:
        raise ValueError(f"p_max must be >= 0, got {p_max}")
    stages = [p_max]
    if target_remainder is not None:
        while stages[-1] < p_limit:
            stages.append(min(max(2 * stages[-1], 1), p_limit))
    power = field.power
    flat = field.values.ravel()
    check_basis_grid(ell, stages[0], basis_w0, field)
    coeffs = []
    # one Laguerre recurrence shared by all stages; guards re-checked per stage
    for p, mode in lg_basis(ell, stages[-1], basis_w0, field, check=False):
        if p > stages[0]:
            stages.pop(0)
            check_basis_grid(ell, stages[0], basis_w0, field)
        coeffs.append(complex(np.vdot(mode.values.ravel(), flat) * field.dx**2))
        if p == stages[0]:
            spectrum = PSpectrum(ell, basis_w0, tuple(coeffs), power)
            if target_remainder is None or spectrum.remainder < target_remainder:
                break
    if spectrum.remainder > 0.05:
        warnings.warn(
            f"p-spectrum for ell={ell} leaves {spectrum.remainder:.1%} of the power outside p <= {spectrum.p_max}",
            RuntimeWarning,
            stacklevel=2,
        )
    return spectrum


def reconstruct(spectrum: PSpectrum, like: SampledField) -> SampledField:
    """Resynthesize ``sum_p c_p LG_{ell,p}`` on the grid of ``like``."""
    total = np.zeros((like.n, like.n), dtype=complex)
    for p, mode in lg_basis(spectrum.ell, spectrum.p_max, spectrum.basis_w0, like):
        total += spectrum.coefficients[p] * mode.values
    return like.with_values(total)


def kinoform_divergence(
    ell: int,
    w0_illum: float,
    grid: GridSpec,
    wavelength: float,
    z_samples: Sequence[float] | None = None,
    padding: int = 2,
) -> DivergenceFit:
    """Fitted far-field divergence of the kinoform beam.

    Planes default to 5-40 Rayleigh ranges of the illumination beam.
    """
    zR = BeamGeometry.from_waist(wavelength, w0_illum).zR
    beam = make_kinoform_beam(ell, w0_illum, grid, wavelength)
    return fit_divergence(beam, z_samples, zR=zR, padding=padding)


@dataclass(frozen=True)
class PetalReport:
    """Far-field petals of an equal ``+ell`` / ``-ell`` superposition.

    Angles are far-field angles in radians; ``arc_spacing`` is the mean
    petal separation along the ring, ``ring_radius`` the angular radius of
    the ring.
    """

    ell: int
    family: str
    count: int
    angular_spacing: float
    arc_spacing: float
    ring_radius: float
    positions: tuple
    spacing_spread: float = 0.0


FAMILIES = ("fixed_w0", "fixed_rms")


def petal_beam(ell: int, w0: float, grid: GridSpec, wavelength: float) -> SampledField:
    """``(LG_{+ell,0} + LG_{-ell,0}) / sqrt(2)`` at the waist."""
    geom = BeamGeometry.from_waist(wavelength, w0)
    plus = synthesize_lg(LGModeSpec(ell, 0, w0), geom, grid)
    minus = synthesize_lg(LGModeSpec(-ell, 0, w0), geom, grid)
    return superpose([plus, minus], [1 / math.sqrt(2), 1 / math.sqrt(2)])


def _circular_maxima(profile: np.ndarray, threshold: float) -> np.ndarray:
    left = np.roll(profile, 1)
    right = np.roll(profile, -1)
    peak = profile.max()
    return np.flatnonzero((profile > left) & (profile > right) & (profile >= threshold * peak))


def petal_analysis(
    ell: int,
    family: str,
    size: float,
    grid: GridSpec,
    wavelength: float,
    *,
    padding: int = 2,
    threshold: float = 0.5,
    n_samples: int = 2048,
) -> PetalReport:
    """Count and space the far-field intensity maxima on the peak ring.

    ``size`` is the waist for ``family="fixed_w0"`` and the waist-plane rms
    radius for ``family="fixed_rms"``.
    """
    if ell < 1:
        raise ValueError(f"petal analysis needs ell >= 1, got {ell}")
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    w0 = size if family == "fixed_w0" else waist_for_fixed_rms(ell, size)
    far = far_field(petal_beam(ell, w0, grid, wavelength), padding)

    ring = measure_moments(far).r_imax
    if ring < 2 * far.dx:
        raise PetalDetectionError(f"no ring found for ell={ell}: intensity peaks on axis")
    phi = 2 * math.pi * np.arange(n_samples) / n_samples
    col = far.n // 2 + ring * np.cos(phi) / far.dx
    row = far.n // 2 + ring * np.sin(phi) / far.dx
    azimuthal = map_coordinates(far.intensity, [row, col], order=3, mode="nearest")
    if azimuthal.max() <= 0 or np.ptp(azimuthal) < 1e-6 * azimuthal.max():
        raise PetalDetectionError(f"flat intensity on the ring for ell={ell}")
    idx = _circular_maxima(azimuthal, threshold)
    if idx.size == 0:
        raise PetalDetectionError(f"no maxima above {threshold:.0%} of the ring peak for ell={ell}")
    positions = phi[idx]
    gaps = np.diff(np.concatenate([positions, [positions[0] + 2 * math.pi]]))
    spacing = float(gaps.mean())
    return PetalReport(
        ell, family, int(idx.size), spacing, spacing * ring, ring, tuple(positions), float(gaps.std())
    )


def write_pspectrum_csv(path, spectrum: PSpectrum) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["ell", "p", "power_fraction", "re_c", "im_c", "remainder"])
        for ell, p, wgt, re, im, rem in spectrum.rows():
            out.writerow([ell, p, f"{wgt:.12g}", f"{re:.12g}", f"{im:.12g}", f"{rem:.12g}"])


def write_petal_csv(path, reports: Sequence[PetalReport]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["ell", "family", "count", "angular_spacing_rad", "arc_spacing_rad", "ring_radius_rad"])
        for rep in reports:
            out.writerow(
                [
                    rep.ell,
                    rep.family,
                    rep.count,
                    f"{rep.angular_spacing:.12g}",
                    f"{rep.arc_spacing:.12g}",
                    f"{rep.ring_radius:.12g}",
                ]
            )
