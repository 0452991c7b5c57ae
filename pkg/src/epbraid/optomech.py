"""Map between abstract two-mode protocols and a driven optomechanical pair.

Two mechanical modes couple through a driven cavity; with the optics
adiabatically eliminated the pair evolves under an effective non-Hermitian
generator whose couplings all run through one complex susceptibility.  The
susceptibility is linear in the laser power and rational in the mean
detuning, so a target coupling trajectory can be inverted sample by sample
for the two real drive knobs: power P_L(t) >= 0 and detuning delta0(t).

Internal units set hbar = 1; converting laser power from SI therefore means
dividing by hbar times the laser frequency in rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleTargetError
from .spectrum import pauli_decompose
from .synthesis import Protocol


@dataclass(frozen=True)
class OptomechParams:
    """Fixed platform rates plus the two drive knobs (power, mean detuning)."""

    omega_mech: tuple          # (omega_1, omega_2) mechanical frequencies
    gamma_mech: tuple          # (gamma_1, gamma_2) mechanical damping rates
    g: tuple                   # (g_1, g_2) optomechanical couplings
    kappa: float               # cavity linewidth
    kappa_in: float            # input coupling rate
    p_laser: float = 0.0       # laser power (hbar = 1 units)
    omega_laser: float = 1.0   # laser frequency
    delta0: float = 0.0        # mean laser-cavity detuning

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.p_laser < 0:
            raise ValueError("laser power must be >= 0")
        if self.omega_laser <= 0:
            raise ValueError("laser frequency must be positive")

    @property
    def omega_mean(self) -> float:
        return 0.5 * (self.omega_mech[0] + self.omega_mech[1])


def _susceptibility_shape(params: OptomechParams, delta0: float) -> complex:
    """Susceptibility per unit laser power at a given mean detuning."""
    half_k = 0.5 * params.kappa
    w0 = params.omega_mean
    pref = params.kappa_in / ((half_k * half_k + delta0 * delta0) * params.omega_laser)
    return pref * (
        1.0 / (half_k - 1j * (w0 + delta0)) - 1.0 / (half_k + 1j * (-2.0 * w0 + delta0))
    )


def susceptibility(params: OptomechParams) -> complex:
    """Complex mechanical susceptibility at the parameters' drive point."""
    return params.p_laser * _susceptibility_shape(params, params.delta0)


def effective_hamiltonian(params: OptomechParams) -> np.ndarray:
    """Effective two-mode generator after eliminating the optical modes.

    Diagonal: omega_j - i gamma_j/2 - i g_j^2 eta; off-diagonal (both):
    -i eta g_1 g_2.
    """
    eta = susceptibility(params)
    g1, g2 = params.g
    diag = [
        params.omega_mech[0] - 0.5j * params.gamma_mech[0] - 1j * g1 * g1 * eta,
        params.omega_mech[1] - 0.5j * params.gamma_mech[1] - 1j * g2 * g2 * eta,
    ]
    off = -1j * eta * g1 * g2
    return np.array([[diag[0], off], [off, diag[1]]], dtype=complex)


def two_mode_coefficients(mat: np.ndarray):
    """Read the traceless two-mode form off an effective generator.

    Returns (delta, omega_coupling, gamma, id_part) such that the traceless
    part equals -(delta + i gamma/2) sigma_z + omega_coupling sigma_x with a
    complex coupling; the trace half is returned separately (a global decay
    factor that drops from ratio-normalized probabilities).
    """
    fx, fy, fz, id_part = pauli_decompose(mat)
    if abs(fy) > 1e-12 * max(1.0, abs(fx)):
        raise ValueError("generator has a sigma_y component; not of two-mode form")
    delta = -fz.real
    gamma = -2.0 * fz.imag
    return delta, fx, gamma, id_part


@dataclass
class InversionResult:
    """Per-sample drive schedules recovered from a target protocol."""

    times: np.ndarray
    p_laser: np.ndarray
    delta0: np.ndarray
    residual: np.ndarray

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "p_laser", "delta0", "residual"])
            for k in range(len(self.times)):
                writer.writerow(
                    [
                        repr(float(self.times[k])),
                        repr(float(self.p_laser[k])),
                        repr(float(self.delta0[k])),
                        repr(float(self.residual[k])),
                    ]
                )


def _susceptibility_shape_deriv(params: OptomechParams, delta0: float) -> complex:
    """d/d(delta0) of the per-power susceptibility (rational, so exact)."""
    half_k = 0.5 * params.kappa
    w0 = params.omega_mean
    lor = half_k * half_k + delta0 * delta0
    a = half_k - 1j * (w0 + delta0)
    b = half_k + 1j * (delta0 - 2.0 * w0)
    bracket = 1.0 / a - 1.0 / b
    bracket_d = 1j / (a * a) + 1j / (b * b)
    return params.kappa_in / params.omega_laser * (
        -2.0 * delta0 / (lor * lor) * bracket + bracket_d / lor
    )


def _coupling_equation(params, p_laser, delta0):
    g1, g2 = params.g
    return -1j * p_laser * _susceptibility_shape(params, delta0) * g1 * g2


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _phase_roots(params, phase_target, scan, max_depth=9):
    """Detunings where the susceptibility shape has the requested phase.

    The wrapped phase mismatch can jump by 2 pi at wrap lines and swing
    violently across cavity resonances, so every sign change is subdivided
    until both bracket endpoints are genuinely near zero; brackets that never
    settle are wraps, not roots, and are dropped.
    """

    def mism(d):
        return float(_wrap_angle(np.angle(_susceptibility_shape(params, d)) - phase_target))

    def bisect(lo, hi, flo):
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if (mism(mid) >= 0.0) == (flo >= 0.0):
                lo, flo = mid, mism(mid)
            else:
                hi = mid
            if hi - lo < 1e-15 * max(1.0, abs(hi)):
                # tight: near resonances the magnitude is steep where the
                # phase is flat, so power accuracy rides on this width
                break
        return 0.5 * (lo + hi)

    roots = []

    def process(lo, hi, flo, fhi, depth, bracketed):
        if bracketed and abs(flo) < 0.5 * np.pi and abs(fhi) < 0.5 * np.pi:
            roots.append(bisect(lo, hi, flo))
            return
        if depth >= max_depth:
            return  # endpoints pinned near +-pi at all scales: a wrap line
        pts = np.linspace(lo, hi, 9)
        vals = [flo] + [mism(p) for p in pts[1:-1]] + [fhi]
        for k in range(8):
            if vals[k] == 0.0:
                roots.append(float(pts[k]))
            elif vals[k] * vals[k + 1] < 0.0 or abs(vals[k + 1] - vals[k]) > 0.5:
                # sign changes and fast phase motion both deserve a closer
                # look: resonances hide root pairs inside single intervals
                process(
                    float(pts[k]),
                    float(pts[k + 1]),
                    vals[k],
                    vals[k + 1],
                    depth + 1,
                    vals[k] * vals[k + 1] < 0.0,
                )

    vals = [mism(float(d)) for d in scan]
    for k in range(len(scan) - 1):
        if vals[k] == 0.0:
            roots.append(float(scan[k]))
        elif vals[k] * vals[k + 1] < 0.0 or abs(vals[k + 1] - vals[k]) > 0.5:
            process(
                float(scan[k]),
                float(scan[k + 1]),
                vals[k],
                vals[k + 1],
                0,
                vals[k] * vals[k + 1] < 0.0,
            )

    roots.sort()
    dedup = []
    for r in roots:
        if not dedup or r - dedup[-1] > 1e-10 * max(1.0, abs(r)):
            dedup.append(r)
    return dedup


def _solve_sample(params, target_fx, prev_delta, scan, tol, max_iter=50):
    """Solve -i eta(P, d0) g1 g2 = target_fx for (P >= 0, d0).

    The magnitude fixes the power once the detuning matches the phase, so the
    detuning is found first from the one-dimensional phase equation (robust
    where the phase is stationary and the joint Jacobian degenerates), then a
    few damped Newton iterations polish the pair.
    """
    g1, g2 = params.g
    scale = max(abs(target_fx), 1e-30)
    want = target_fx / (-1j * g1 * g2)

    def resid(xx):
        val = _coupling_equation(params, xx[0], xx[1]) - target_fx
        return np.array([val.real, val.imag])

    def polish(x):
        # damped Newton, rejected if it leaves the physical half-plane P >= 0
        f = resid(x)
        for _ in range(max_iter):
            if np.linalg.norm(f) <= tol * scale:
                break
            d_p = -1j * _susceptibility_shape(params, x[1]) * g1 * g2
            d_d = -1j * x[0] * _susceptibility_shape_deriv(params, x[1]) * g1 * g2
            jac = np.array([[d_p.real, d_d.real], [d_p.imag, d_d.imag]])
            try:
                step = np.linalg.solve(jac, -f)
            except np.linalg.LinAlgError:
                break
            lam = 1.0
            base = np.linalg.norm(f)
            while lam > 1e-8:
                xn = x + lam * step
                if xn[0] >= 0.0:
                    fn = resid(xn)
                    if np.linalg.norm(fn) < base:
                        x, f = xn, fn
                        break
                lam *= 0.5  # damp on residual increase or sign violation
            else:
                break
        return x, float(np.linalg.norm(f) / scale)

    roots = _phase_roots(params, float(np.angle(want)), scan)
    if not roots:
        # no exact phase match on the grid; polish from the closest mismatch
        mism = np.abs(
            _wrap_angle(
                np.angle([_susceptibility_shape(params, d) for d in scan]) - np.angle(want)
            )
        )
        roots = [float(scan[int(np.argmin(mism))])]
    anchor = prev_delta if prev_delta is not None else 0.0
    best = None
    for d0 in sorted(roots, key=lambda r: abs(r - anchor)):
        x0 = np.array([abs(want) / abs(_susceptibility_shape(params, d0)), d0])
        res0 = float(np.linalg.norm(resid(x0)) / scale)
        if res0 <= tol:
            # the bisected phase root pins the detuning to machine precision;
            # Newton would only wander along the ill-conditioned valley
            return x0, res0
        x, res = polish(x0)
        if x[0] >= 0.0 and res <= tol * 10.0:
            return x, res
        if best is None or res < best[1]:
            best = (x, res)
    return best


def invert_controls(
    target: Protocol,
    fixed: OptomechParams,
    tol: float = 1e-10,
    feasibility_tol: float = 1e-8,
    strict: bool = True,
    delta0_scan: int = 257,
) -> InversionResult:
    """Recover (P_L(t), delta0(t)) reproducing a target coupling trajectory.

    The first sample is seeded by a coarse scan over detuning (power follows
    from the magnitude); later samples warm-start from the previous solution.
    Each solve is validated by reassembling the effective generator; with
    ``strict`` a residual above ``feasibility_tol`` aborts with the offending
    time, otherwise the residual is reported per sample.
    """
    g1, g2 = fixed.g
    times = target.times
    fy_scale = float(np.max(np.abs(target.fx))) or 1.0
    bad_y = np.nonzero(np.abs(target.fy) > 1e-10 * fy_scale)[0]
    if len(bad_y):
        raise InfeasibleTargetError(
            "target has a sigma_y component, outside the platform's reach",
            time=float(times[bad_y[0]]),
            residual=float(np.abs(target.fy[bad_y[0]])),
        )

    p_out = np.zeros(len(times))
    d_out = np.zeros(len(times))
    r_out = np.zeros(len(times))

    prev = None
    half_span = 3.0 * (fixed.kappa + abs(fixed.omega_mean)) + 1.0
    scan = np.linspace(-half_span, half_span, delta0_scan)
    for k, t in enumerate(times):
        fx_t = complex(target.fx[k])
        if g1 == 0.0 or g2 == 0.0:
            if abs(fx_t) > 1e-12 * fy_scale:
                raise InfeasibleTargetError(
                    "nonzero coupling requested with a vanishing optomechanical coupling",
                    time=float(t),
                    residual=abs(fx_t),
                )
            p_out[k] = 0.0
            d_out[k] = prev[1] if prev is not None else 0.0
            prev = (p_out[k], d_out[k])
            _check_full_residual(target, fixed, k, t, p_out, d_out, r_out, feasibility_tol, strict)
            continue
        if abs(fx_t) < 1e-14 * fy_scale:
            p_out[k] = 0.0
            d_out[k] = prev[1] if prev is not None else fixed.delta0
            prev = (p_out[k], d_out[k])
            _check_full_residual(target, fixed, k, t, p_out, d_out, r_out, feasibility_tol, strict)
            continue

        prev_delta = prev[1] if prev is not None else None
        (p_k, d_k), res = _solve_sample(fixed, fx_t, prev_delta, scan, tol)
        if p_k < 0.0 or res > feasibility_tol:
            if strict:
                raise InfeasibleTargetError(
                    "target coupling outside the reachable set "
                    f"(P_L={p_k:.3g}, residual={res:.3g})",
                    time=float(t),
                    residual=float(res),
                )
            # best-effort sample, flagged through the residual map
            p_k = max(p_k, 0.0)
        p_out[k], d_out[k] = p_k, d_k
        prev = (p_k, d_k)
        _check_full_residual(target, fixed, k, t, p_out, d_out, r_out, feasibility_tol, strict)

    return InversionResult(times=times, p_laser=p_out, delta0=d_out, residual=r_out)


def _check_full_residual(target, fixed, k, t, p_out, d_out, r_out, feasibility_tol, strict):
    """Reassemble the generator from the solved drives and record the full
    mismatch against the target (coupling, traceless sigma_z part, trace)."""
    model = effective_hamiltonian(replace(fixed, p_laser=p_out[k], delta0=d_out[k]))
    mfx, _, mfz, mid = pauli_decompose(model)
    full = abs(mfx - complex(target.fx[k]))
    if target.id_part is not None:
        full = max(full, abs(mid - complex(target.id_part[k])))
    full = max(full, abs(mfz - complex(target.fz[k])))
    r_out[k] = full / max(1.0, abs(complex(target.fx[k])))
    if strict and r_out[k] > feasibility_tol:
        raise InfeasibleTargetError(
            "reassembled generator does not reproduce the target "
            f"(residual {r_out[k]:.3g}); pass strict=False to map the mismatch",
            time=float(t),
            residual=float(r_out[k]),
        )
