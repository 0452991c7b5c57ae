import numpy as np
import pytest

from epbraid.contour import CircularLoop, Schedule
from epbraid.errors import EPOnPathError, InvalidDressingError
from epbraid.spectrum import SIGMA_Y, atan_principal
from epbraid.synthesis import (
    HyperGaussianMask,
    MaskRanges,
    Protocol,
    _w_trajectory,
    dressed_fields_from_angles,
    find_field_discontinuities,
    lambda_continued,
    loop_kinematics,
    radd_dressing_angle,
    radd_optimize,
    rms,
    satd_dressing_angle,
    satd_fields,
    td_correction,
    theta_continued,
    time_branch_state,
    uncorrected_protocol,
)

LOOP1 = CircularLoop(0.5, 0.5, 1.0, 0.0)          # always-usable dressing
LOOP2 = CircularLoop(0.5, 1.0 / 6.0, 1.0, -np.pi / 8)  # validity depends on t0


def theta_dot_fd(loop, schedule, branch, t, h=1e-5):
    def th(tt):
        kin = loop_kinematics(loop, schedule, tt)
        return theta_continued(kin, branch, tt)

    vals = [complex(th(t + k * h)) for k in (-2, -1, 1, 2)]
    return (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)


class TestTransitionlessCorrection:
    def test_correction_vanishes_at_endpoints(self):
        protocol = td_correction(LOOP1, Schedule(5.0), 512)
        for k in (0, -1):
            assert abs(protocol.correction.fy[k]) < 1e-12

    def test_counter_drive_matches_fd_mixing_rate(self):
        schedule = Schedule(5.0)
        protocol = td_correction(LOOP1, schedule, 512)
        branch = time_branch_state(LOOP1, schedule, 512)
        t = 1.7  # away from the crossing, where the mixing rate is finite
        fd = theta_dot_fd(LOOP1, schedule, branch, t)
        fx, fy, fz = (complex(np.asarray(v).reshape(())) for v in protocol.fields(t))
        assert abs(fy - 0.5 * fd) < 1e-8 * abs(fd)

    def test_lab_frame_equals_conjugated_eigenframe_drive(self):
        # the sigma_y counter-drive commutes with the frame rotation
        from epbraid.dynamics import instantaneous_frames

        schedule = Schedule(5.0)
        protocol = td_correction(LOOP1, schedule, 256)
        frames = instantaneous_frames(LOOP1, schedule, protocol.times)
        k = 100
        kin = loop_kinematics(LOOP1, schedule, protocol.times[k])
        w_ad = 0.5 * complex(kin.theta_dot) * SIGMA_Y
        lab = frames.mats[k] @ w_ad @ frames.inv_mats[k]
        corr = protocol.correction
        w_direct = np.array(
            [[0, -1j * corr.fy[k]], [1j * corr.fy[k], 0]], dtype=complex
        )
        assert np.allclose(lab, w_direct, atol=1e-12)

    def test_ep_on_loop_rejected(self):
        bad = CircularLoop(0.5, 0.5, 1.0, 0.0)
        # shrink gamma so the loop passes right through the degeneracy ring
        bad = CircularLoop(delta0=0.5, omega0=0.0, gamma0=1.0, phi=0.0)
        with pytest.raises(EPOnPathError):
            td_correction(bad, Schedule(3.0), 256)


class TestDressingAngle:
    def test_starts_at_zero(self):
        dressing = satd_dressing_angle(LOOP1, Schedule(5.0), 512)
        assert abs(dressing.mu[0]) < 1e-12

    def test_loop2_short_time_invalid(self):
        dressing = satd_dressing_angle(LOOP2, Schedule(2.0), 2048)
        assert not dressing.valid
        assert dressing.n_crossings % 2 == 1
        assert dressing.mu_end_over_pi_mod2() == pytest.approx(1.0, abs=0.05)

    def test_loop2_longer_time_valid(self):
        dressing = satd_dressing_angle(LOOP2, Schedule(5.0), 2048)
        assert dressing.valid
        assert dressing.mu_end_over_pi_mod2() == pytest.approx(0.0, abs=0.05)

    def test_loop1_always_valid(self):
        for t0 in (1.0, 2.0, 5.0, 13.0):
            assert satd_dressing_angle(LOOP1, Schedule(t0), 1024).valid

    def test_continued_angle_is_continuous(self):
        dressing = satd_dressing_angle(LOOP2, Schedule(2.0), 2048)
        jumps = np.abs(np.diff(dressing.mu))
        assert np.max(jumps) < 0.1  # glued through the pi-steps

    def test_parity_equals_endpoint_sheet(self):
        # two independent routes to the same flag across a loop-time scan
        for t0 in np.linspace(1.2, 8.0, 12):
            dressing = satd_dressing_angle(LOOP2, Schedule(float(t0)), 1024)
            sampled = dressing.mu_end_over_pi_mod2()
            assert round(sampled) % 2 == dressing.end_parity
            assert dressing.valid == (dressing.end_parity == 0)


class TestMaskedDressing:
    def test_zero_amplitude_reduces_to_natural(self):
        nat = satd_dressing_angle(LOOP2, Schedule(5.0), 512)
        mod = radd_dressing_angle(LOOP2, Schedule(5.0), (0.0, 1.0, 2), 512)
        assert np.allclose(nat.mu, mod.mu, atol=1e-12)

    def test_starts_at_zero(self):
        mod = radd_dressing_angle(LOOP2, Schedule(5.0), (1.0, 1.0, 2), 512)
        assert abs(mod.mu[0]) < 1e-12

    def test_mask_shrinks_midpoint_angle(self):
        # frozen oracle pair on the off-center loop at t0 = 5, mask (1, t0/5, 2)
        schedule = Schedule(5.0)
        branch = time_branch_state(LOOP2, schedule, 1024)
        w_nat, _ = _w_trajectory(LOOP2, schedule, branch, None, 2.5)
        w_mod, _ = _w_trajectory(
            LOOP2, schedule, branch, HyperGaussianMask(1.0, 1.0, 2), 2.5
        )
        mu_nat = complex(-atan_principal(w_nat))
        mu_mod = complex(-atan_principal(w_mod))
        assert abs(mu_nat) == pytest.approx(1.1637258594960402, abs=1e-9)
        assert abs(mu_mod) == pytest.approx(0.8453275329454597, abs=1e-9)
        assert abs(mu_mod) < abs(mu_nat)

    def test_mask_validation(self):
        with pytest.raises(ValueError):
            HyperGaussianMask(-1.0, 1.0, 2)
        with pytest.raises(ValueError):
            HyperGaussianMask(1.0, 0.0, 2)
        with pytest.raises(ValueError):
            HyperGaussianMask(1.0, 1.0, 0)

    def test_mask_derivative_matches_fd(self):
        mask = HyperGaussianMask(2.0, 0.7, 3)
        t = np.linspace(0.5, 4.5, 41)
        h = 1e-6
        fd = (mask.value(t + h, 5.0) - mask.value(t - h, 5.0)) / (2 * h)
        assert np.max(np.abs(fd - mask.deriv(t, 5.0))) < 1e-7


class TestDressedFields:
    def test_invalid_dressing_refused(self):
        dressing = satd_dressing_angle(LOOP2, Schedule(2.0), 1024)
        with pytest.raises(InvalidDressingError):
            satd_fields(LOOP2, Schedule(2.0), dressing)

    def test_corrections_vanish_at_endpoints(self):
        schedule = Schedule(5.0)
        protocol = satd_fields(LOOP1, schedule, satd_dressing_angle(LOOP1, schedule, 1024))
        corr = protocol.correction
        for k in (0, -1):
            wnorm = max(abs(corr.fx[k]), abs(corr.fz[k]))
            assert wnorm < 1e-8 * LOOP1.gamma0

    def test_modified_spectrum_reduces_at_endpoints(self):
        schedule = Schedule(5.0)
        protocol = satd_fields(LOOP1, schedule, satd_dressing_angle(LOOP1, schedule, 1024))
        bare = uncorrected_protocol(LOOP1, schedule, 1024)
        for t in (0.0, schedule.t0):
            hm = protocol.hamiltonian(t)
            hb = bare.hamiltonian(t)
            lam_m = np.sort_complex(np.linalg.eigvals(hm))
            lam_b = np.sort_complex(np.linalg.eigvals(hb))
            assert np.allclose(lam_m, lam_b, atol=1e-8)

    def test_interior_sample_matches_literal_assembly(self):
        # independent route: sampled angles, five-point finite differences,
        # literal trigonometric field formulas
        schedule = Schedule(5.0)
        grid = 2048
        dressing = satd_dressing_angle(LOOP2, schedule, grid)
        protocol = satd_fields(LOOP2, schedule, dressing)
        branch = time_branch_state(LOOP2, schedule, grid)
        t = 2.5
        h = 1e-5

        kin = loop_kinematics(LOOP2, schedule, t)
        th = complex(theta_continued(kin, branch, t))
        th_dot = theta_dot_fd(LOOP2, schedule, branch, t, h)

        def mu_of(tt):
            w, _ = _w_trajectory(LOOP2, schedule, branch, None, tt)
            return complex(-atan_principal(w))

        mus = [mu_of(t + k * h) for k in (-2, -1, 0, 1, 2)]
        mu_dot = (mus[0] - 8 * mus[1] + 8 * mus[3] - mus[4]) / (12 * h)
        gx, gz = dressed_fields_from_angles(
            complex(kin.omega), complex(kin.delta), LOOP2.gamma0, th, th_dot, mus[2], mu_dot
        )
        fx, fy, fz = (complex(np.asarray(v).reshape(())) for v in protocol.fields(t))
        assert abs((complex(kin.omega) + gx) - fx) < 1e-7
        assert abs((-complex(kin.zeta) + gz) - fz) < 1e-7

    def test_amplitude_reduced_for_on_cut_basepoint(self):
        # at the quasi-coherent loop time the on-cut basepoint needs a much
        # smaller correction than the off-cut one
        t0 = 14.5
        schedule = Schedule(t0)
        out = {}
        for phi in (0.0, np.pi):
            loop = CircularLoop(0.5, 0.5, 1.0, phi)
            protocol = satd_fields(loop, schedule, satd_dressing_angle(loop, schedule, 2048))
            out[phi] = float(np.max(np.abs(protocol.correction.fx)))
        assert out[np.pi] < 0.5 * out[0.0]

    def test_non_holomorphic_angle_breaks_fields(self):
        # regression: assembling with the raw (sheet-less) mixing angle while
        # the dressing angle stays continued must produce a field jump at the
        # cut crossing, and the jump detector must fire
        schedule = Schedule(5.0)
        grid = 2048
        branch = time_branch_state(LOOP2, schedule, grid)
        interior = slice(8, -8)  # the literal assembly is singular at mu -> 0
        times = np.linspace(0.0, schedule.t0, grid + 1)[interior]
        kin = loop_kinematics(LOOP2, schedule, times)
        root = np.sqrt(kin.rad)  # plain principal branch, chi frozen to zero
        theta_raw = -2.0 * atan_principal(kin.omega / (kin.zeta + root))
        w, w_dot = _w_trajectory(LOOP2, schedule, branch, None, times)
        mu = -atan_principal(w)
        mu_dot = -w_dot / (1.0 + w * w)
        gx, gz = dressed_fields_from_angles(
            kin.omega, kin.delta, LOOP2.gamma0, theta_raw, kin.theta_dot, mu, mu_dot
        )
        jumps = find_field_discontinuities(times, kin.omega + gx, -kin.zeta + gz)
        assert jumps, "discontinuity detector failed to fire on mixed sheets"
        # the consistent assembly on the same grid is smooth
        protocol = satd_fields(LOOP2, schedule, satd_dressing_angle(LOOP2, schedule, grid))
        assert not find_field_discontinuities(
            protocol.times[interior], protocol.fx[interior], protocol.fz[interior]
        )

    def test_emitted_fields_pass_jump_detector(self):
        schedule = Schedule(3.0)
        protocol = satd_fields(LOOP1, schedule, satd_dressing_angle(LOOP1, schedule, 1024))
        assert not find_field_discontinuities(protocol.times, protocol.fx, protocol.fz)


class TestRms:
    def test_constant_field(self):
        t = np.linspace(0.0, 2.0, 33)
        p = Protocol(t, np.full(33, 3.0 + 0j), np.zeros(33), np.zeros(33))
        assert rms(p) == pytest.approx(3.0)

    def test_pythagorean(self):
        t = np.linspace(0.0, 2.0, 33)
        p = Protocol(t, np.full(33, 3.0 + 0j), np.full(33, 4.0 + 0j), np.zeros(33))
        assert rms(p) == pytest.approx(5.0)

    def test_counter_drive_raises_total_cost(self):
        schedule = Schedule(5.0)
        uc = uncorrected_protocol(LOOP1, schedule, 1024)
        td = td_correction(LOOP1, schedule, 1024)
        assert rms(td) >= rms(uc)


class TestMaskOptimizer:
    def test_single_candidate_space(self):
        ranges = MaskRanges(
            amplitude=(0.5, 0.5), width_fraction=(0.2, 0.2), exponents=(2,),
            n_amplitude=1, n_width=1,
        )
        result = radd_optimize(LOOP1, Schedule(7.0), ranges, grid=512)
        assert result.amplitude == pytest.approx(0.5, rel=0.2)
        assert result.exponent == 2
        assert result.n_candidates == 1

    def test_optimized_correction_beats_plain_dressing(self):
        result = radd_optimize(
            LOOP1,
            Schedule(12.0),
            MaskRanges(n_amplitude=10, n_width=8),
            grid=1024,
        )
        assert result.rms < result.rms_satd
        assert result.protocol.kind == "radd"

    def test_optimized_correction_beats_counter_drive_at_long_loop_times(self):
        schedule = Schedule(15.0)
        result = radd_optimize(LOOP1, schedule, MaskRanges(n_amplitude=10, n_width=8), grid=1024)
        td = td_correction(LOOP1, schedule, 1024)
        assert result.rms < rms(td.correction)

    def test_never_returns_invalid_dressing(self):
        result = radd_optimize(
            LOOP2, Schedule(5.0), MaskRanges(n_amplitude=8, n_width=6), grid=1024
        )
        dressing = radd_dressing_angle(
            LOOP2,
            Schedule(5.0),
            (result.amplitude, result.width, result.exponent),
            1024,
        )
        assert dressing.valid

    def test_deterministic_across_worker_counts(self):
        ranges = MaskRanges(n_amplitude=6, n_width=5, exponents=(1, 2, 3))
        serial = radd_optimize(LOOP1, Schedule(12.0), ranges, grid=512, jobs=1)
        pooled = radd_optimize(LOOP1, Schedule(12.0), ranges, grid=512, jobs=3)
        assert (serial.amplitude, serial.width, serial.exponent) == (
            pooled.amplitude,
            pooled.width,
            pooled.exponent,
        )
        assert serial.rms == pooled.rms


class TestProtocolIO:
    def test_csv_roundtrip(self, tmp_path):
        schedule = Schedule(4.0)
        protocol = td_correction(LOOP1, schedule, 256)
        path = tmp_path / "protocol.csv"
        protocol.to_csv(path)
        back = Protocol.from_csv(path)
        assert np.allclose(back.times, protocol.times)
        assert np.allclose(back.fx, protocol.fx)
        assert np.allclose(back.fy, protocol.fy)
        assert np.allclose(back.fz, protocol.fz)

    def test_sigma_z_shift(self):
        schedule = Schedule(4.0)
        protocol = uncorrected_protocol(LOOP1, schedule, 128)
        shifted = protocol.with_sigma_z_shift(0.1)
        assert np.allclose(shifted.fz, protocol.fz + 0.1)
        plus = protocol.with_sigma_z_shift(0.05)
        minus = protocol.with_sigma_z_shift(-0.05)
        assert np.allclose(0.5 * (plus.fz + minus.fz), protocol.fz)
