"""Construction of transitionless, dressed and masked-dressed control fields.

Three correction schemes share one pipeline.  All of them start from a
control loop traversed by a smooth schedule:

* ``td``   cancels the non-inertial eigenframe coupling at every instant by
  adding a sigma_y drive equal to half the mixing-angle velocity;
* ``satd`` dresses the instantaneous frame with an x-rotation whose angle has
  tangent -theta_dot / (2 lambda) and re-expresses the required generator
  through sigma_x and sigma_z only;
* ``radd`` inflates the denominator of that tangent with a hyper-Gaussian
  window, trading a larger quasi-adiabatic drive inside the window for a
  smaller dressing velocity, and optimizes the window parameters for the
  cheapest correction.

The dressed-angle arctangent lives on a cut complex plane, so the angle is
continued across its cut the same way the spectrum is continued across the
square-root cut.  A dressing is only usable when the continued angle returns
to the identity sheet at the final time, i.e. when the crossing count is
even; odd counts flip the final frame and the synthesis refuses to emit
fields.

All derivative expressions are closed-form.  The field assembly uses the
exact identities lambda*cos(theta) = zeta and lambda*sin(theta) = -omega,
which cancel every branch choice: field values never depend on the sheet
bookkeeping (the validity flag does).
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .contour import (
    ARCTAN_CUT,
    DEFAULT_GRID,
    BranchState,
    CircularLoop,
    Schedule,
    detect_branch_crossings,
)
from .errors import (
    BranchRefinementError,
    EPOnPathError,
    FieldDiscontinuityError,
    InvalidDressingError,
)
from .spectrum import atan_principal, pauli_compose, sqrt_upper


# ---------------------------------------------------------------------------
# loop kinematics along the schedule


@dataclass(frozen=True)
class LoopKinematics:
    """Loop coordinates and their time derivatives at a batch of times."""

    delta: np.ndarray
    omega: np.ndarray
    gamma: float
    zeta: np.ndarray           # delta + i*gamma/2
    rad: np.ndarray            # zeta**2 + omega**2
    rad_dot: np.ndarray
    theta_dot: np.ndarray
    theta_ddot: np.ndarray


def loop_kinematics(loop: CircularLoop, schedule: Schedule, t) -> LoopKinematics:
    t = np.asarray(t, dtype=float)
    eps = schedule.eps(t)
    eps_dot = schedule.eps_dot(t)
    eps_ddot = schedule.eps_ddot(t)

    delta, omega, _ = loop.coords(eps)
    d1, o1 = loop.coords_deriv(eps)
    d2, o2 = loop.coords_deriv2(eps)
    delta_dot = d1 * eps_dot
    omega_dot = o1 * eps_dot
    delta_ddot = d2 * eps_dot**2 + d1 * eps_ddot
    omega_ddot = o2 * eps_dot**2 + o1 * eps_ddot

    zeta = delta + 0.5j * loop.gamma0
    rad = zeta * zeta + omega * omega
    rad_dot = 2.0 * (zeta * delta_dot + omega * omega_dot)
    # theta_dot = (omega*delta_dot - zeta*omega_dot)/rad: branch-free because
    # the arctan derivative is invariant under u -> -1/u.
    theta_dot = (omega * delta_dot - zeta * omega_dot) / rad
    theta_ddot = (omega * delta_ddot - zeta * omega_ddot - theta_dot * rad_dot) / rad
    return LoopKinematics(
        delta=delta,
        omega=omega,
        gamma=loop.gamma0,
        zeta=zeta,
        rad=rad,
        rad_dot=rad_dot,
        theta_dot=theta_dot,
        theta_ddot=theta_ddot,
    )


def check_ep_clearance(loop: CircularLoop, schedule: Schedule, n: int = 2048, rel_tol: float = 1e-8):
    """Raise if the loop passes through (or hair-close to) a degeneracy."""
    eps = schedule.eps(np.linspace(0.0, schedule.t0, n + 1))
    delta, omega, _ = loop.coords(eps)
    zeta = delta + 0.5j * loop.gamma0
    rad = zeta * zeta + omega * omega
    scale = float(np.max(np.abs(rad)))
    if float(np.min(np.abs(rad))) <= rel_tol * scale:
        raise EPOnPathError("control loop passes through a spectral degeneracy")


def time_branch_state(loop: CircularLoop, schedule: Schedule, n: int = DEFAULT_GRID) -> BranchState:
    """Square-root-cut crossings of the loop's radicand, located in time."""
    from .contour import SQRT_CUT, chi_circ

    grid = np.linspace(0.0, schedule.t0, n + 1)

    def rad_of(t):
        kin = loop_kinematics(loop, schedule, t)
        return kin.rad

    chi0 = float(chi_circ(loop, 0.0))
    return detect_branch_crossings(rad_of(grid), grid, SQRT_CUT, refine=rad_of, chi0=chi0)


def lambda_continued(kin: LoopKinematics, branch: BranchState, t) -> np.ndarray:
    """Continued eigenvalue strand lambda_plus(t) along the loop."""
    return branch.sheet_sign(np.asarray(t, dtype=float)) * sqrt_upper(kin.rad)


def theta_continued(kin: LoopKinematics, branch: BranchState, t) -> np.ndarray:
    """Continued mixing angle along the loop (same sheet steps as lambda).

    On the ray where the principal root cancels the complex detuning exactly
    (omega = 0 with negative detuning) the half-angle argument is 0/0; the
    limiting angle there is pi, and a pi ambiguity is harmless because frames
    depend on the angle only modulo 2*pi up to an overall sign.
    """
    root = sqrt_upper(kin.rad)
    den = kin.zeta + root
    singular = den == 0.0
    if np.any(singular):
        den = np.where(singular, 1.0, den)
        base = np.where(singular, np.pi, -2.0 * atan_principal(kin.omega / den))
    else:
        base = -2.0 * atan_principal(kin.omega / den)
    return base + branch.chi(np.asarray(t, float))


# ---------------------------------------------------------------------------
# protocols


@dataclass
class Protocol:
    """Time-sampled complex Pauli coefficients of a control generator.

    ``fx``, ``fy``, ``fz`` multiply sigma_x, sigma_y, sigma_z; any identity
    part is carried separately in ``id_part`` (zero for the two-mode loops,
    kept for platform maps whose effective generator has a trace).
    Synthesized protocols also carry a dense ``evaluator`` so integrators are
    not limited to the sample grid, and the correction part (the fields minus
    the bare loop drive) as a nested protocol.
    """

    times: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray
    kind: str = "uncorrected"
    id_part: Optional[np.ndarray] = None
    evaluator: Optional[Callable] = None
    correction: Optional["Protocol"] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name in ("fx", "fy", "fz"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=complex))
        if self.id_part is not None:
            self.id_part = np.asarray(self.id_part, dtype=complex)
            if len(self.id_part) != len(self.times):
                raise ValueError("id_part must align with the time grid")
        if not (len(self.times) == len(self.fx) == len(self.fy) == len(self.fz)):
            raise ValueError("field sample arrays must align with the time grid")
        if len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing with >= 2 samples")

    @property
    def t0(self) -> float:
        return float(self.times[-1])

    def fields(self, t):
        """Field triple at arbitrary times (dense evaluator or interpolation)."""
        if self.evaluator is not None:
            return self.evaluator(t)
        t = np.asarray(t, dtype=float)
        out = []
        for f in (self.fx, self.fy, self.fz):
            out.append(np.interp(t, self.times, f.real) + 1j * np.interp(t, self.times, f.imag))
        return tuple(out)

    def hamiltonian(self, t) -> np.ndarray:
        """Generator matrix at a single time (including any trace part)."""
        fx, fy, fz = (complex(np.asarray(v).reshape(())) for v in self.fields(t))
        trace_half = 0.0
        if self.id_part is not None:
            t = float(np.asarray(t).reshape(()))
            trace_half = complex(
                np.interp(t, self.times, self.id_part.real)
                + 1j * np.interp(t, self.times, self.id_part.imag)
            )
        return pauli_compose(fx, fy, fz, trace_half)

    def with_sigma_z_shift(self, shift: complex) -> "Protocol":
        """Same generator with a constant sigma_z offset (quasi-static noise)."""
        ev = None
        if self.evaluator is not None:
            base = self.evaluator

            def ev(t, _base=base, _s=shift):
                fx, fy, fz = _base(t)
                return fx, fy, fz + _s

        return Protocol(
            times=self.times,
            fx=self.fx,
            fy=self.fy,
            fz=self.fz + shift,
            kind=self.kind,
            id_part=self.id_part,
            evaluator=ev,
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "fx_re", "fx_im", "fy_re", "fy_im", "fz_re", "fz_im"])
            for k in range(len(self.times)):
                writer.writerow(
                    [
                        repr(float(self.times[k])),
                        repr(float(self.fx[k].real)),
                        repr(float(self.fx[k].imag)),
                        repr(float(self.fy[k].real)),
                        repr(float(self.fy[k].imag)),
                        repr(float(self.fz[k].real)),
                        repr(float(self.fz[k].imag)),
                    ]
                )

    @classmethod
    def from_csv(cls, path, kind="imported"):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:7] != ["t", "fx_re", "fx_im", "fy_re", "fy_im", "fz_re", "fz_im"]:
                raise ValueError(f"unexpected protocol CSV header in {path}")
            for row in reader:
                rows.append([float(x) for x in row[:7]])
        arr = np.asarray(rows)
        return cls(
            times=arr[:, 0],
            fx=arr[:, 1] + 1j * arr[:, 2],
            fy=arr[:, 3] + 1j * arr[:, 4],
            fz=arr[:, 5] + 1j * arr[:, 6],
            kind=kind,
        )


def protocol_times(schedule: Schedule, grid: int) -> np.ndarray:
    return np.linspace(0.0, schedule.t0, grid + 1)


def uncorrected_protocol(loop: CircularLoop, schedule: Schedule, grid: int = DEFAULT_GRID) -> Protocol:
    """Bare loop drive: fx = omega(t), fz = -(delta(t) + i*gamma/2)."""
    times = protocol_times(schedule, grid)

    def ev(t):
        kin = loop_kinematics(loop, schedule, t)
        zero = np.zeros_like(kin.omega, dtype=complex)
        return kin.omega + 0.0j, zero, -kin.zeta

    fx, fy, fz = ev(times)
    return Protocol(times, fx, fy, fz, kind="uncorrected", evaluator=ev)


def td_correction(loop: CircularLoop, schedule: Schedule, grid: int = DEFAULT_GRID) -> Protocol:
    """Loop drive plus the sigma_y counter-drive theta_dot/2.

    The counter-drive commutes with the eigenframe rotation, so its lab-frame
    and eigenframe forms coincide; it vanishes at both endpoints because the
    schedule's velocity does.
    """
    check_ep_clearance(loop, schedule)
    times = protocol_times(schedule, grid)

    def ev(t):
        kin = loop_kinematics(loop, schedule, t)
        zero = np.zeros_like(kin.omega, dtype=complex)
        return kin.omega + 0.0j, 0.5 * kin.theta_dot, -kin.zeta

    fx, fy, fz = ev(times)
    corr = Protocol(times, np.zeros_like(fx), fy.copy(), np.zeros_like(fz), kind="td-correction")
    return Protocol(times, fx, fy, fz, kind="td", evaluator=ev, correction=corr)


# ---------------------------------------------------------------------------
# dressing angles


@dataclass(frozen=True)
class HyperGaussianMask:
    """Window A * exp[-((t - t0/2)/width)**(2*exponent)] added to the gap."""

    amplitude: float
    width: float
    exponent: int

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.exponent < 1 or int(self.exponent) != self.exponent:
            raise ValueError("exponent must be an integer >= 1")

    def value(self, t, t0):
        x2 = ((np.asarray(t, dtype=float) - 0.5 * t0) / self.width) ** 2
        return self.amplitude * np.exp(-(x2**self.exponent))

    def deriv(self, t, t0):
        x = (np.asarray(t, dtype=float) - 0.5 * t0) / self.width
        x2 = x * x
        return self.value(t, t0) * (-2.0 * self.exponent) * x2 ** (self.exponent - 1) * x / self.width


@dataclass
class DressingAngle:
    """Continued dressing angle samples plus sheet bookkeeping and validity."""

    times: np.ndarray
    mu: np.ndarray
    branch: BranchState
    valid: bool
    n_crossings: int
    mask: Optional[HyperGaussianMask] = None

    @property
    def end_parity(self) -> int:
        """Final sheet index modulo 2 (zero for a usable dressing)."""
        return self.n_crossings % 2

    def mu_end_over_pi_mod2(self) -> float:
        """mu(t0)/pi reduced modulo 2, from the continued samples."""
        return float(np.real(self.mu[-1]) / np.pi) % 2.0


def _w_trajectory(loop, schedule, loop_branch, mask, t, kin=None):
    """Dressing-angle argument w = (theta_dot/2) / (lambda (1 + F)) and its
    time derivative, on the continued eigenvalue strand."""
    t = np.asarray(t, dtype=float)
    if kin is None:
        kin = loop_kinematics(loop, schedule, t)
    lam = lambda_continued(kin, loop_branch, t)
    lam_dot = lam * kin.rad_dot / (2.0 * kin.rad)
    if mask is None:
        fmask = np.zeros_like(t)
        fmask_dot = np.zeros_like(t)
    else:
        fmask = mask.value(t, schedule.t0)
        fmask_dot = mask.deriv(t, schedule.t0)
    den = lam * (1.0 + fmask)
    w = (0.5 * kin.theta_dot) / den
    w_dot = (0.5 * kin.theta_ddot) / den - (0.5 * kin.theta_dot) * (
        lam_dot * (1.0 + fmask) + lam * fmask_dot
    ) / den**2
    return w, w_dot


def _glue_offsets(w_of, crossings, t0):
    """Per-crossing angle offsets that keep -arctan(w(t)) continuous.

    Each cut crossing jumps the principal arctan by +-pi; the offset cancels
    the jump, so the continued angle is smooth and its final sheet index has
    the crossing-count parity.
    """
    offsets = []
    acc = 0.0
    for tc in crossings:
        h = max(1e-9 * t0, 4e-12 * t0)
        before = complex(-atan_principal(complex(w_of(max(tc - h, 0.0)))))
        after = complex(-atan_principal(complex(w_of(min(tc + h, t0)))))
        jump = (after - before).real
        steps = int(round(jump / np.pi))
        if steps == 0 or abs(jump / np.pi - steps) > 0.25:
            raise BranchRefinementError(
                f"dressing-angle jump at t={tc:.6g} is {jump:.3f}, not a clean "
                "multiple of pi; increase the sampling density"
            )
        acc -= steps * np.pi
        offsets.append(acc)
    return np.asarray(offsets, dtype=float)


def satd_dressing_angle(
    loop: CircularLoop,
    schedule: Schedule,
    grid: int = DEFAULT_GRID,
    mask: Optional[HyperGaussianMask] = None,
) -> DressingAngle:
    """Continued dressing angle for the (optionally masked) dressing.

    The natural angle is -arctan[(theta_dot/2) / (lambda (1 + F))]; crossings
    of the arctan cut are detected on the argument trajectory and glued.  The
    dressing is valid iff the crossing count is even.
    """
    check_ep_clearance(loop, schedule)
    loop_branch = time_branch_state(loop, schedule, grid)
    times = protocol_times(schedule, grid)

    def w_of(t):
        return _w_trajectory(loop, schedule, loop_branch, mask, t)[0]

    w_samples = w_of(times)
    cut_state = detect_branch_crossings(w_samples, times, ARCTAN_CUT, refine=w_of)

    mu_nat = -atan_principal(w_samples)
    offsets = _glue_offsets(w_of, cut_state.crossings, schedule.t0)
    if len(cut_state.crossings):
        idx = np.searchsorted(cut_state.crossings, times, side="right")
        glue = np.where(idx > 0, offsets[np.maximum(idx - 1, 0)], 0.0)
    else:
        glue = np.zeros_like(times)
    mu = mu_nat + glue

    n = cut_state.n_crossings
    return DressingAngle(
        times=times,
        mu=mu,
        branch=cut_state,
        valid=(n % 2 == 0),
        n_crossings=n,
        mask=mask,
    )


def radd_dressing_angle(
    loop: CircularLoop,
    schedule: Schedule,
    mask: HyperGaussianMask | tuple,
    grid: int = DEFAULT_GRID,
) -> DressingAngle:
    """Masked dressing angle; same continuation and validity rules."""
    if not isinstance(mask, HyperGaussianMask):
        amplitude, width, exponent = mask
        mask = HyperGaussianMask(float(amplitude), float(width), int(exponent))
    return satd_dressing_angle(loop, schedule, grid=grid, mask=mask)


# ---------------------------------------------------------------------------
# dressed field assembly


def _dressed_field_samples(loop, schedule, loop_branch, mask, t):
    """Total and correction fields of the dressed protocol at times ``t``.

    Uses lambda*cos(theta) = zeta and lambda*sin(theta) = -omega, which makes
    every term manifestly independent of the branch bookkeeping:

        f_x = omega (1 + F) + (mu_dot/2) zeta  / lambda
        f_z = -zeta (1 + F) + (mu_dot/2) omega / lambda

    and the correction is the same with (1 + F) -> F.  The ratio mu_dot /
    lambda is branch-even, so the principal-branch lambda can be used.
    """
    t = np.asarray(t, dtype=float)
    kin = loop_kinematics(loop, schedule, t)
    w, w_dot = _w_trajectory(loop, schedule, loop_branch, mask, t, kin=kin)
    mu_dot = -w_dot / (1.0 + w * w)
    lam = lambda_continued(kin, loop_branch, t)
    if mask is None:
        fmask = np.zeros_like(t)
    else:
        fmask = mask.value(t, schedule.t0)
    half_ratio = 0.5 * mu_dot / lam
    fx = kin.omega * (1.0 + fmask) + half_ratio * kin.zeta
    fz = -kin.zeta * (1.0 + fmask) + half_ratio * kin.omega
    gx = kin.omega * fmask + half_ratio * kin.zeta
    gz = -kin.zeta * fmask + half_ratio * kin.omega
    return fx, fz, gx, gz


def dressed_fields_from_angles(omega, delta, gamma, theta, theta_dot, mu, mu_dot):
    """Literal trigonometric assembly of the correction fields.

        g_x = -omega + (theta_dot/2) cot(mu) sin(theta) + (mu_dot/2) cos(theta)
        g_z = i*gamma/2 + delta + (theta_dot/2) cot(mu) cos(theta) - (mu_dot/2) sin(theta)

    Kept as an independent route for cross-checking the closed-form assembly;
    it is singular where mu vanishes (the endpoints) and, unlike the closed
    form, it blows up if the supplied angles mix inconsistent sheets.
    """
    cot_mu = np.cos(mu) / np.sin(mu)
    gx = -omega + 0.5 * theta_dot * cot_mu * np.sin(theta) + 0.5 * mu_dot * np.cos(theta)
    gz = (
        0.5j * gamma
        + delta
        + 0.5 * theta_dot * cot_mu * np.cos(theta)
        - 0.5 * mu_dot * np.sin(theta)
    )
    return gx, gz


def find_field_discontinuities(times, *components, ratio: float = 10.0, floor: float = 1e-6):
    """Indices where a sampled field jumps relative to its neighbours.

    A genuine discontinuity makes one adjacent-sample difference dwarf the
    neighbouring differences; smooth but peaked fields keep the ratio of a
    difference to its neighbours bounded.
    """
    bad = set()
    for f in components:
        d = np.abs(np.diff(np.asarray(f)))
        if len(d) < 3:
            continue
        scale = float(np.max(np.abs(f))) or 1.0
        neigh = np.empty_like(d)
        neigh[1:-1] = d[:-2] + d[2:]
        neigh[0] = 2.0 * d[1]
        neigh[-1] = 2.0 * d[-2]
        jumps = np.nonzero((d > ratio * (neigh + 1e-300)) & (d > floor * scale))[0]
        bad.update(int(j) for j in jumps)
    return sorted(bad)


def satd_fields(
    loop: CircularLoop,
    schedule: Schedule,
    dressing: DressingAngle,
    grid: Optional[int] = None,
) -> Protocol:
    """Modified protocol for a valid (masked) dressing.

    Refuses invalid dressings: an odd crossing count means the final dressed
    frame is an x-flip, and the emitted fields would map each eigenmode onto
    the other instead of returning it.
    """
    if not dressing.valid:
        raise InvalidDressingError(
            "dressing angle does not return to the identity sheet: "
            f"mu(t0)/pi mod 2 = {dressing.end_parity} "
            f"({dressing.n_crossings} cut crossings)"
        )
    times = dressing.times if grid is None else protocol_times(schedule, grid)
    loop_branch = time_branch_state(loop, schedule, len(times) - 1)
    mask = dressing.mask

    def ev(t):
        fx, fz, _, _ = _dressed_field_samples(loop, schedule, loop_branch, mask, t)
        return fx, np.zeros_like(fx), fz

    fx, fz, gx, gz = _dressed_field_samples(loop, schedule, loop_branch, mask, times)
    zero = np.zeros_like(fx)
    jumps = find_field_discontinuities(times, fx, fz)
    if jumps:
        raise FieldDiscontinuityError(
            f"synthesized fields jump at sample indices {jumps[:4]}; "
            "the frame continuation is inconsistent"
        )
    kind = "radd" if mask is not None else "satd"
    corr = Protocol(times, gx, zero.copy(), gz, kind=f"{kind}-correction")
    return Protocol(times, fx, zero, fz, kind=kind, evaluator=ev, correction=corr)


# ---------------------------------------------------------------------------
# resource cost and mask optimization


def rms(protocol: Protocol) -> float:
    """Root-mean-square field amplitude sqrt[(1/t0) integral sum |f_i|^2 dt]."""
    t = protocol.times
    s = np.abs(protocol.fx) ** 2 + np.abs(protocol.fy) ** 2 + np.abs(protocol.fz) ** 2
    return float(np.sqrt(np.trapezoid(s, t) / (t[-1] - t[0])))


@dataclass(frozen=True)
class MaskRanges:
    """Search space of the mask optimizer (widths as fractions of t0)."""

    amplitude: tuple = (1e-2, 10.0)
    width_fraction: tuple = (1.0 / 25.0, 1.0 / 3.0)
    exponents: tuple = (1, 2, 3, 4, 5, 6, 7)
    n_amplitude: int = 24
    n_width: int = 16

    def amplitudes(self):
        return np.geomspace(self.amplitude[0], self.amplitude[1], self.n_amplitude)

    def widths(self, t0):
        return np.geomspace(self.width_fraction[0] * t0, self.width_fraction[1] * t0, self.n_width)


@dataclass(frozen=True)
class RaddResult:
    amplitude: float
    width: float
    exponent: int
    protocol: Protocol
    rms: float
    rms_satd: float
    n_candidates: int
    n_valid: int


def _quick_parity_even(w_samples) -> bool:
    """Crossing-count parity from sign changes alone (no refinement).

    Parity is insensitive to crossings missed in even pairs, so sampled sign
    changes are enough for gating the optimizer's candidates.
    """
    side = w_samples.real >= 0.0
    flips = np.nonzero(side[:-1] != side[1:])[0]
    n = 0
    for i in flips:
        if abs(w_samples.imag[i]) >= 1.0 or abs(w_samples.imag[i + 1]) >= 1.0:
            n += 1
    return n % 2 == 0


def _correction_rms_of_mask(loop, schedule, loop_branch, times, mask):
    """Correction-field RMS for one mask; None when the dressing is invalid."""
    w, _ = _w_trajectory(loop, schedule, loop_branch, mask, times)
    if not _quick_parity_even(w):
        return None
    _, _, gx, gz = _dressed_field_samples(loop, schedule, loop_branch, mask, times)
    s = np.abs(gx) ** 2 + np.abs(gz) ** 2
    return float(np.sqrt(np.trapezoid(s, times) / (times[-1] - times[0])))


def _radd_worker(args):
    loop, schedule, grid, masks = args
    loop_branch = time_branch_state(loop, schedule, grid)
    times = protocol_times(schedule, grid)
    out = []
    for mask in masks:
        out.append(_correction_rms_of_mask(loop, schedule, loop_branch, times, mask))
    return out


def _golden_refine(fun, x0, lo, hi, iters=10):
    """Golden-section descent of a unimodal-ish 1-d slice in log space."""
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log(lo), np.log(hi)
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(np.exp(c)), fun(np.exp(d))
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(np.exp(d))
    x = np.exp(c if fc <= fd else d)
    return x, min(fc, fd)


def radd_optimize(
    loop: CircularLoop,
    schedule: Schedule,
    ranges: Optional[MaskRanges] = None,
    grid: int = 2048,
    jobs: int = 1,
) -> RaddResult:
    """Mask parameters minimizing the correction-field RMS among valid dressings.

    Exhaustive scan over a log-spaced amplitude/width grid for each exponent,
    followed by coordinate-wise golden-section refinement at the best
    exponent.  Candidates whose dressing angle does not return to the
    identity sheet are discarded; if none survives, that is an error.
    """
    ranges = ranges or MaskRanges()
    t0 = schedule.t0
    amplitudes = ranges.amplitudes()
    widths = ranges.widths(t0)
    masks = [
        HyperGaussianMask(float(a), float(nu), int(n))
        for n in ranges.exponents
        for a in amplitudes
        for nu in widths
    ]

    loop_branch = time_branch_state(loop, schedule, grid)
    times = protocol_times(schedule, grid)

    if jobs > 1:
        chunks = [masks[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_radd_worker, [(loop, schedule, grid, c) for c in chunks]))
        values = {}
        for chunk, vals in zip(chunks, results):
            for m, v in zip(chunk, vals):
                values[m] = v
        scored = [(values[m], m) for m in masks]
    else:
        scored = [(_correction_rms_of_mask(loop, schedule, loop_branch, times, m), m) for m in masks]

    n_valid = sum(1 for v, _ in scored if v is not None)
    if n_valid == 0:
        raise InvalidDressingError(
            f"no valid dressing among {len(masks)} mask candidates "
            f"(amplitudes {ranges.amplitude}, widths ~t0*{ranges.width_fraction}, "
            f"exponents {ranges.exponents})"
        )
    best_val, best_mask = min(
        ((v, m) for v, m in scored if v is not None), key=lambda vm: (vm[0], vm[1].exponent)
    )

    # Coordinate refinement in (amplitude, width) at the winning exponent.
    def eval_mask(a, nu):
        v = _correction_rms_of_mask(
            loop, schedule, loop_branch, times, HyperGaussianMask(a, nu, best_mask.exponent)
        )
        return np.inf if v is None else v

    a_best, nu_best = best_mask.amplitude, best_mask.width
    for _ in range(2):
        a_best, _ = _golden_refine(lambda a: eval_mask(a, nu_best), a_best, *ranges.amplitude)
        nu_best, _ = _golden_refine(
            lambda nu: eval_mask(a_best, nu),
            nu_best,
            ranges.width_fraction[0] * t0,
            ranges.width_fraction[1] * t0,
        )
    refined = eval_mask(a_best, nu_best)
    if refined <= best_val:
        best_mask = HyperGaussianMask(float(a_best), float(nu_best), best_mask.exponent)
        best_val = float(refined)

    dressing = radd_dressing_angle(loop, schedule, best_mask, grid=grid)
    protocol = satd_fields(loop, schedule, dressing)
    satd_ref = satd_fields(loop, schedule, satd_dressing_angle(loop, schedule, grid=grid))
    return RaddResult(
        amplitude=best_mask.amplitude,
        width=best_mask.width,
        exponent=best_mask.exponent,
        protocol=protocol,
        rms=float(rms(protocol.correction)),
        rms_satd=float(rms(satd_ref.correction)),
        n_candidates=len(masks),
        n_valid=n_valid,
    )
