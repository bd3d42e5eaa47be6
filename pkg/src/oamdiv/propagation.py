"""Free-space propagation of sampled fields and divergence estimation.

Three methods are available:

``angular-spectrum``
    Exact scalar transfer function ``exp(i z (kz - k))`` on a zero-padded
    grid; output cropped back to the input grid. For near-field distances.
``fresnel``
    Single-FFT scaled Fresnel transform. The output pitch is
    ``lambda z / (N dx)``, so the window grows with the beam; used for the
    long distances of divergence fits.
``fraunhofer``
    Far-field transform onto an angular grid of pitch ``lambda / (N dx)``.

The common carrier phase ``exp(ikz)`` is dropped by all three.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import fft as sfft

from .errors import PropagationWindowError
from .field import SampledField

METHODS = ("angular-spectrum", "fresnel", "fraunhofer")


@dataclass(frozen=True)
class PropagationPlan:
    method: str = "angular-spectrum"
    z: float = 0.0
    padding: int = 2

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown propagation method {self.method!r}; choose from {METHODS}")
        if self.padding not in (1, 2, 4):
            raise ValueError(f"padding factor must be 1, 2 or 4, got {self.padding}")
        if self.method == "angular-spectrum" and self.z < 0:
            raise ValueError("angular-spectrum propagation needs z >= 0")
        if self.method == "fresnel" and not self.z > 0:
            raise ValueError("fresnel propagation needs z > 0")


@dataclass(frozen=True)
class DivergenceFit:
    """Least-squares asymptote of ``r_rms(z)``.

    ``residual`` is the rms deviation from the fitted line relative to the
    mean fitted radius. ``z_samples`` and ``r_rms`` hold every propagated
    plane; only the last ``n_fit`` enter the fit.
    """

    alpha: float
    residual: float
    z_samples: tuple
    r_rms: tuple
    n_fit: int
    intercept: float = 0.0

    def __post_init__(self):
        if len(self.z_samples) < 3:
            raise ValueError("a divergence fit needs at least 3 z samples")


def _fft2c(a):
    return sfft.fftshift(sfft.fft2(sfft.ifftshift(a), workers=-1))


def _ifft2c(a):
    return sfft.fftshift(sfft.ifft2(sfft.ifftshift(a), workers=-1))


def _pad(values, padding):
    if padding == 1:
        return values
    n = values.shape[0]
    big = np.zeros((padding * n, padding * n), dtype=complex)
    o = (padding - 1) * n // 2
    big[o : o + n, o : o + n] = values
    return big


def _crop(values, n):
    o = (values.shape[0] - n) // 2
    return values[o : o + n, o : o + n]


def second_moment_law(field: SampledField):
    """Coefficients ``(a, b, c)`` with ``<r^2>(z) = a + b z + c z^2`` (paraxial).

    ``a`` is the spatial second moment, ``c`` the mean squared propagation
    angle from the spectrum and ``b`` the transverse current term.
    """
    u = field.values
    intensity = field.intensity
    total = intensity.sum()
    X, Y = field.coords()
    a = float((intensity * (X**2 + Y**2)).sum() / total)
    k = 2 * math.pi * sfft.fftfreq(field.n, field.dx)
    u_hat = sfft.fft2(u, workers=-1)
    spec = np.abs(u_hat) ** 2
    kx2 = (k**2)[None, :] + (k**2)[:, None]
    c = float((spec * kx2).sum() / spec.sum()) / field.k0**2
    dudx = sfft.ifft2(u_hat * (1j * k)[None, :], workers=-1)
    dudy = sfft.ifft2(u_hat * (1j * k)[:, None], workers=-1)
    current = np.imag(np.conj(u) * (X * dudx + Y * dudy))
    b = float(2 * current.sum() / total) / field.k0
    return a, b, c


def predicted_rms(field: SampledField, z: float) -> float:
    """Paraxial prediction of the rms radius after propagating by ``z``."""
    return _law_rms(second_moment_law(field), z)


def _window_guard(r_pred: float, half_window: float, where: str):
    # predicted radius plus three predicted widths, width taken as r_rms
    if 4 * r_pred > half_window:
        raise PropagationWindowError(
            f"{where}: predicted r_rms {r_pred:.4g} m needs half-window >= {4 * r_pred:.4g} m, "
            f"have {half_window:.4g} m; enlarge the grid extent or use the fresnel method"
        )


def _law_rms(law, z):
    a, b, c = law
    return math.sqrt(max(a + b * z + c * z**2, 0.0))


def _angular_spectrum(field: SampledField, plan: PropagationPlan, law=None) -> SampledField:
    if plan.z == 0:
        return field.with_values(field.values)
    law = law or second_moment_law(field)
    _window_guard(_law_rms(law, plan.z), field.extent / 2, "angular-spectrum")
    big = _pad(field.values, plan.padding)
    n_big = big.shape[0]
    k = 2 * math.pi * sfft.fftfreq(n_big, field.dx)
    kappa2 = (k**2)[None, :] + (k**2)[:, None]
    k0 = field.k0
    kz = np.sqrt((k0**2 - kappa2).astype(complex))
    # kz - k0 written without cancellation; valid for evanescent kz = i s too
    transfer = np.exp(1j * plan.z * (-kappa2 / (k0 + kz)))
    spectrum = sfft.fft2(sfft.ifftshift(big), workers=-1)
    out = sfft.fftshift(sfft.ifft2(spectrum * transfer, workers=-1))
    return field.with_values(_crop(out, field.n), z=field.z + plan.z)


def _fresnel(field: SampledField, plan: PropagationPlan, law=None) -> SampledField:
    z = plan.z
    lam = field.wavelength
    min_z = field.extent * field.dx / lam
    if z < min_z:
        raise PropagationWindowError(
            f"fresnel: input chirp undersampled at z={z:.4g} m (needs z >= L dx / lambda = {min_z:.4g} m); "
            "use angular-spectrum for short distances"
        )
    big = _pad(field.values, plan.padding)
    n_big = big.shape[0]
    dx2 = lam * z / (n_big * field.dx)
    law = law or second_moment_law(field)
    _window_guard(_law_rms(law, z), n_big * dx2 / 2, "fresnel")
    k0 = field.k0
    x1 = (np.arange(n_big) - n_big // 2) * field.dx
    x2 = (np.arange(n_big) - n_big // 2) * dx2
    chirp1 = np.exp(0.5j * k0 * x1**2 / z)
    chirp2 = np.exp(0.5j * k0 * x2**2 / z)
    g = big * chirp1[None, :] * chirp1[:, None]
    out = _fft2c(g) * (field.dx**2 / (1j * lam * z))
    out = out * chirp2[None, :] * chirp2[:, None]
    return SampledField(out, dx2, field.z + z, lam)


def far_field(field: SampledField, padding: int = 2) -> SampledField:
    """Fraunhofer pattern on an angular grid, normalized to the input power.

    The amplitude is ``FT[u](theta / lambda) / lambda``; the rms radius of the
    result (see :func:`~oamdiv.field.measure_moments`) is the far-field rms
    divergence half-angle.
    """
    big = _pad(field.values, padding)
    n_big = big.shape[0]
    lam = field.wavelength
    out = _fft2c(big) * (field.dx**2 / lam)
    return SampledField(out, lam / (n_big * field.dx), field.z, lam, domain="angle")


def propagate(field: SampledField, plan: PropagationPlan) -> SampledField:
    """Propagate ``field`` by ``plan.z`` with the plan's method.

    Raises
    ------
    PropagationWindowError
        If the beam is predicted to outgrow the window (4 predicted rms radii
        beyond the half-window), or the Fresnel chirp is undersampled.
    """
    if field.domain != "space":
        raise ValueError("only spatial fields can be propagated")
    return _propagate(field, plan)


def _propagate(field, plan, law=None):
    if plan.method == "angular-spectrum":
        return _angular_spectrum(field, plan, law)
    if plan.method == "fresnel":
        return _fresnel(field, plan, law)
    return far_field(field, plan.padding)


def rms_radius(field: SampledField) -> float:
    """Intensity-weighted rms radius about the axis (no radial profile)."""
    intensity = field.intensity
    x2 = field.axis() ** 2
    weighted = (intensity.sum(axis=0) * x2).sum() + (intensity.sum(axis=1) * x2).sum()
    return math.sqrt(float(weighted / intensity.sum()))


def default_z_samples(zR: float, count: int = 8, start: float = 5.0, stop: float = 40.0):
    """``count`` log-spaced planes between ``start`` and ``stop`` Rayleigh ranges."""
    return tuple(float(z) for z in np.geomspace(start * zR, stop * zR, count))


def effective_rayleigh_range(field: SampledField) -> float:
    """``r_rms(0) / theta_rms``; equals ``zR`` for a Gaussian at its waist."""
    a, _, c = second_moment_law(field)
    return math.sqrt(a / c)


Source = Union[SampledField, Callable[[], SampledField]]


def fit_divergence(
    source: Source,
    z_samples: Sequence[float] | None = None,
    *,
    zR: float | None = None,
    method: str = "fresnel",
    padding: int = 2,
    fit_fraction: float = 0.5,
) -> DivergenceFit:
    """Propagate to each plane, measure ``r_rms`` and fit ``r_rms = alpha z + c``.

    The fit uses the outer ``fit_fraction`` of the planes (at least three) and
    returns ``alpha = arctan(slope)``. Without ``z_samples`` the planes come
    from :func:`default_z_samples` of ``zR`` (or the field's effective
    Rayleigh range).
    """
    field = source() if callable(source) else source
    if z_samples is None:
        z_samples = default_z_samples(zR if zR is not None else effective_rayleigh_range(field))
    z_samples = tuple(sorted(float(z) for z in z_samples))
    if len(z_samples) < 3:
        raise ValueError("a divergence fit needs at least 3 z samples")
    if zR is not None and (z_samples[0] > 5 * zR or z_samples[-1] < 20 * zR):
        warnings.warn(
            f"z samples [{z_samples[0]:.3g}, {z_samples[-1]:.3g}] m do not span [5 zR, 20 zR]",
            RuntimeWarning,
            stacklevel=2,
        )
    if field.domain != "space":
        raise ValueError("only spatial fields can be propagated")
    law = second_moment_law(field)
    radii = tuple(rms_radius(_propagate(field, PropagationPlan(method, z, padding), law)) for z in z_samples)
    n_fit = min(len(z_samples), max(3, math.ceil(fit_fraction * len(z_samples))))
    zs = np.array(z_samples[-n_fit:])
    rs = np.array(radii[-n_fit:])
    slope, intercept = np.polyfit(zs, rs, 1)
    resid = rs - (slope * zs + intercept)
    residual = float(np.sqrt(np.mean(resid**2)) / np.mean(rs))
    return DivergenceFit(float(np.arctan(slope)), residual, z_samples, radii, n_fit, float(intercept))


def write_fit_csv(path, rows) -> None:
    """Write ``(ell, convention, DivergenceFit)`` triples as ``ell,convention,alpha_rad,residual``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["ell", "convention", "alpha_rad", "residual"])
        for ell, convention, fit in rows:
            out.writerow([ell, convention, f"{fit.alpha:.12g}", f"{fit.residual:.12g}"])
