import math

import numpy as np
import pytest

from oamdiv import beam_math as bm
from oamdiv import field as fg
from oamdiv import propagation as pr
from oamdiv.errors import PropagationWindowError

LAM = 633e-9
W0 = 1e-3
GEOM = bm.BeamGeometry.from_waist(LAM, W0)
ZR = GEOM.zR
GRID = fg.GridSpec(512, 32 * W0)
ALPHA0 = W0 / (math.sqrt(2) * ZR)


def lg(ell, p=0, grid=GRID, w0=W0, z=0.0):
    return fg.synthesize_lg(bm.LGModeSpec(ell, p, w0), bm.BeamGeometry.from_waist(LAM, w0), grid, z)


def prop(f, z, method="angular-spectrum", padding=2):
    return pr.propagate(f, pr.PropagationPlan(method, z, padding))


class TestPlan:
    def test_defaults(self):
        plan = pr.PropagationPlan()
        assert (plan.method, plan.z, plan.padding) == ("angular-spectrum", 0.0, 2)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"method": "ray"},
            {"padding": 3},
            {"method": "angular-spectrum", "z": -1.0},
            {"method": "fresnel", "z": 0.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            pr.PropagationPlan(**kwargs)

    def test_fit_needs_three_samples(self):
        with pytest.raises(ValueError):
            pr.DivergenceFit(1e-4, 0.0, (1.0, 2.0), (1.0, 2.0), 2)


class TestAngularSpectrum:
    def test_identity_at_zero(self):
        f = lg(3)
        g = prop(f, 0.0)
        assert np.max(np.abs(g.values - f.values)) <= 1e-12 * np.abs(f.values).max()

    def test_gaussian_at_rayleigh(self):
        g = prop(lg(0), ZR)
        assert fg.measure_moments(g).r_rms == pytest.approx(math.sqrt(2) * W0 / math.sqrt(2), rel=5e-3)
        assert g.z == ZR

    def test_lg4_at_two_rayleigh(self):
        g = prop(lg(4), 2 * ZR)
        expected = bm.radius_rms(4, bm.beam_width(W0, 2 * ZR, ZR))
        assert fg.measure_moments(g).r_rms == pytest.approx(expected, rel=5e-3)

    def test_matches_analytic_mode(self):
        # propagated field equals the mode synthesized at that plane
        z = 1.5 * ZR
        g = prop(lg(2, 1), z)
        ref = lg(2, 1, z=z)
        assert abs(fg.overlap(ref, g)) == pytest.approx(1.0, abs=1e-6)
        assert np.max(np.abs(g.values - ref.values)) < 1e-5 * np.abs(ref.values).max()

    @pytest.mark.parametrize("ell,p", [(0, 0), (3, 0), (2, 2), (-5, 1)])
    @pytest.mark.parametrize("padding", [1, 2, 4])
    def test_power_conserved(self, ell, p, padding):
        g = prop(lg(ell, p), 1.2 * ZR, padding=padding)
        assert g.power == pytest.approx(lg(ell, p).power, rel=1e-4)

    def test_semigroup(self):
        f = lg(1, 1)
        two = prop(prop(f, 0.4 * ZR), 0.7 * ZR)
        one = prop(f, 1.1 * ZR)
        err = np.linalg.norm(two.values - one.values) / np.linalg.norm(one.values)
        assert err < 1e-6

    def test_window_guard(self):
        with pytest.raises(PropagationWindowError, match="enlarge"):
            prop(lg(4), 5 * ZR)

    @pytest.mark.parametrize("ell", [1, 3, -2])
    def test_winding_conserved(self, ell):
        for zfac in (0.5, 1.0, 2.0):
            g = prop(lg(ell), zfac * ZR)
            r = bm.radius_peak_intensity(ell, bm.beam_width(W0, zfac * ZR, ZR))
            assert fg.winding_number(g, r) == ell

    def test_predicted_rms(self):
        f = lg(3, 1)
        for z in (0.0, ZR, 4 * ZR):
            expected = fg.lg_rms_radius(3, 1, float(GEOM.width(z)))
            assert pr.predicted_rms(f, z) == pytest.approx(expected, rel=1e-4)

    def test_rejects_angle_domain(self):
        with pytest.raises(ValueError):
            prop(pr.far_field(lg(0)), ZR)


class TestFresnel:
    def test_matches_angular_spectrum(self):
        # w0 = 0.25 mm: short enough zR to reach the fresnel regime on one grid
        w0 = 0.25e-3
        grid = fg.GridSpec(512, 48 * w0)
        zR = bm.BeamGeometry.from_waist(LAM, w0).zR
        f = lg(2, grid=grid, w0=w0)
        z = 3 * zR
        a = fg.measure_moments(prop(f, z)).r_rms
        b = fg.measure_moments(prop(f, z, "fresnel")).r_rms
        assert b == pytest.approx(a, rel=1e-3)
        assert b == pytest.approx(bm.radius_rms(2, bm.beam_width(w0, z, zR)), rel=2e-3)

    def test_power_conserved(self):
        g = prop(lg(5), 10 * ZR, "fresnel")
        assert g.power == pytest.approx(lg(5).power, rel=1e-10)

    def test_output_pitch(self):
        g = prop(lg(0), 10 * ZR, "fresnel", padding=2)
        assert g.dx == pytest.approx(LAM * 10 * ZR / (2 * GRID.n * GRID.dx), rel=1e-14)

    def test_chirp_guard(self):
        with pytest.raises(PropagationWindowError, match="angular-spectrum"):
            prop(lg(0), 0.1 * ZR, "fresnel")

    def test_winding_far(self):
        g = prop(lg(3), 10 * ZR, "fresnel")
        r = bm.radius_peak_intensity(3, bm.beam_width(W0, 10 * ZR, ZR))
        assert fg.winding_number(g, r) == 3


class TestFarField:
    def test_gaussian(self):
        ff = pr.far_field(lg(0))
        assert ff.domain == "angle"
        assert fg.measure_moments(ff).r_rms == pytest.approx(ALPHA0, rel=5e-3)

    def test_ell3(self):
        assert fg.measure_moments(pr.far_field(lg(3))).r_rms == pytest.approx(2 * ALPHA0, rel=5e-3)

    def test_pitch_and_power(self):
        ff = pr.far_field(lg(2), padding=4)
        assert ff.dx == pytest.approx(LAM / (4 * GRID.n * GRID.dx), rel=1e-14)
        assert ff.power == pytest.approx(1.0, rel=1e-4)

    def test_shift_invariance(self):
        f = lg(2)
        shifted = f.with_values(np.roll(f.values, (7, -12), axis=(0, 1)))
        a = np.abs(pr.far_field(f).values)
        b = np.abs(pr.far_field(shifted).values)
        assert np.max(np.abs(a - b)) < 1e-12 * a.max()

    def test_plan_method(self):
        f = lg(1)
        ff = prop(f, 0.0, "fraunhofer")
        assert np.array_equal(ff.values, pr.far_field(f).values)

    def test_agrees_with_long_angular_spectrum(self):
        # small waist so 10 zR fits in one angular-spectrum window
        w0 = 0.1e-3
        grid = fg.GridSpec(1024, 10e-3)
        zR = bm.BeamGeometry.from_waist(LAM, w0).zR
        f = lg(1, grid=grid, w0=w0)
        z = 10 * zR
        r0 = fg.measure_moments(f).r_rms
        rz = fg.measure_moments(prop(f, z)).r_rms
        theta_as = math.sqrt(rz**2 - r0**2) / z
        theta_ff = fg.measure_moments(pr.far_field(f)).r_rms
        assert theta_as == pytest.approx(theta_ff, rel=1e-2)


class TestSecondMomentLaw:
    def test_gaussian(self):
        a, b, c = pr.second_moment_law(lg(0))
        assert a == pytest.approx(W0**2 / 2, rel=1e-6)
        assert abs(b) < 1e-12
        assert math.sqrt(c) == pytest.approx(ALPHA0, rel=1e-4)

    def test_effective_rayleigh_range(self):
        assert pr.effective_rayleigh_range(lg(0)) == pytest.approx(ZR, rel=1e-4)
        assert pr.effective_rayleigh_range(lg(4)) == pytest.approx(ZR, rel=1e-4)

    def test_rms_radius_fast_path(self):
        f = lg(3, 1)
        assert pr.rms_radius(f) == pytest.approx(fg.measure_moments(f).r_rms, rel=1e-12)


class TestFit:
    def test_default_samples(self):
        zs = pr.default_z_samples(ZR)
        assert len(zs) == 8
        assert zs[0] == pytest.approx(5 * ZR) and zs[-1] == pytest.approx(40 * ZR)
        assert np.allclose(np.diff(np.log(zs)), np.log(8) / 7)

    def test_gaussian(self):
        fit = pr.fit_divergence(lg(0), zR=ZR)
        assert fit.alpha == pytest.approx(bm.divergence_fixed_waist(0, W0, LAM), rel=1e-2)
        assert fit.residual >= 0 and fit.n_fit == 4
        assert len(fit.r_rms) == len(fit.z_samples) == 8

    def test_ell8_ratio(self):
        fit = pr.fit_divergence(lg(8), zR=ZR)
        assert fit.alpha / ALPHA0 == pytest.approx(3.0, rel=1e-2)

    def test_fixed_rms_ell3(self):
        r_rms0 = 1e-3
        w0 = bm.waist_for_fixed_rms(3, r_rms0)
        zR = bm.BeamGeometry.from_waist(LAM, w0).zR
        f = lg(3, grid=fg.GridSpec(512, 32 * r_rms0), w0=w0)
        alpha0 = bm.divergence_fixed_rms(0, r_rms0, 2 * math.pi / LAM)
        fit = pr.fit_divergence(f, zR=zR)
        assert fit.alpha / alpha0 == pytest.approx(4.0, rel=1e-2)

    def test_matches_local_angle_at_midpoint(self):
        fit = pr.fit_divergence(lg(2), zR=ZR)
        fitted = fit.z_samples[-fit.n_fit :]
        mid = 0.5 * (fitted[0] + fitted[-1])
        assert fit.alpha == pytest.approx(bm.divergence_local(2, GEOM, W0, mid), rel=1e-2)

    def test_near_field_chord(self):
        # angular-spectrum planes inside 3 zR: chord slope of the exact law
        zs = np.linspace(1 * ZR, 3 * ZR, 6)
        fit = pr.fit_divergence(lg(2), zs, method="angular-spectrum", fit_fraction=1.0)
        r = [bm.radius_rms(2, bm.beam_width(W0, z, ZR)) for z in zs]
        assert math.tan(fit.alpha) == pytest.approx(np.polyfit(zs, r, 1)[0], rel=1e-3)

    @pytest.mark.filterwarnings("ignore:z samples")
    def test_far_range_matches_limit(self):
        zs = np.geomspace(10 * ZR, 40 * ZR, 6)
        fit = pr.fit_divergence(lg(2), zs, zR=ZR)
        assert fit.alpha == pytest.approx(bm.divergence_fixed_waist(2, W0, LAM), rel=1e-2)

    def test_factory_and_effective_zR(self):
        fit = pr.fit_divergence(lambda: lg(1))
        assert fit.alpha == pytest.approx(bm.divergence_fixed_waist(1, W0, LAM), rel=1e-2)

    def test_warns_on_short_span(self):
        with pytest.warns(RuntimeWarning, match="span"):
            pr.fit_divergence(lg(0), [6 * ZR, 8 * ZR, 10 * ZR], zR=ZR)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            pr.fit_divergence(lg(0), [10 * ZR, 20 * ZR])

    def test_guard_propagates(self):
        with pytest.raises(PropagationWindowError):
            pr.fit_divergence(lg(0), [0.1 * ZR, 0.2 * ZR, 0.3 * ZR])

    def test_csv(self, tmp_path):
        fit = pr.DivergenceFit(1.5e-4, 2e-6, (1.0, 2.0, 3.0), (1.0, 2.0, 3.0), 3)
        path = tmp_path / "fit.csv"
        pr.write_fit_csv(path, [(0, "fixed_w0", fit)])
        assert path.read_text() == "ell,convention,alpha_rad,residual\n0,fixed_w0,0.00015,2e-06\n"
