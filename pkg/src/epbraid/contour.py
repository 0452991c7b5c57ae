"""Closed control loops, time schedules and branch-sheet bookkeeping along them.

A circular loop in the (delta, omega) plane at fixed gamma is traversed by a
smooth quintic ramp in time.  As the loop winds around the spectral
degeneracy its radicand trajectory crosses the square-root cut; the sheet
angle must step by pi at every crossing for the composed spectrum to stay
continuous.  A closed form for those steps exists for centered circles, but
the numeric crossing detector is authoritative: it handles basepoints sitting
exactly on the cut and arbitrary sampled trajectories (it is reused for the
arctan cut of the dressing angle).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BranchRefinementError, ScheduleDomainError
from .spectrum import ParamPoint, sqrt_upper

log = logging.getLogger(__name__)

#: default number of samples per loop traversal
DEFAULT_GRID = 4096

#: relative time accuracy of crossing refinement
CROSSING_REFINE_TOL = 1e-12


@dataclass(frozen=True)
class CircularLoop:
    """Circle of radius ``delta0`` around (0, omega0) at fixed ``gamma0``.

    ``phi`` is the basepoint angle measured from the omega axis and ``d`` the
    traversal orientation (+1 or -1).  One full traversal corresponds to the
    progress variable ``eps`` running from 0 to ``d``.
    """

    delta0: float
    omega0: float
    gamma0: float
    phi: float = 0.0
    d: int = 1

    def __post_init__(self):
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if self.delta0 <= 0:
            raise ValueError("delta0 must be positive")
        if self.d not in (+1, -1):
            raise ValueError("orientation d must be +1 or -1")
        if self.d == -1:
            # No reference simulation pins this orientation; results are an
            # extrapolation of the closed-form sheet step.
            log.info("orientation d=-1 is extrapolated; numeric detector is authoritative")

    def angles(self, eps):
        return 2.0 * np.pi * np.asarray(eps, dtype=float) + self.phi

    def coords(self, eps):
        """Vectorized (delta, omega, gamma) at loop progress ``eps``."""
        a = self.angles(eps)
        delta = self.delta0 * np.sin(a)
        omega = self.omega0 + self.delta0 * np.cos(a)
        gamma = np.broadcast_to(self.gamma0, np.shape(a))
        return delta, omega, gamma

    def coords_deriv(self, eps):
        """d/d(eps) of (delta, omega)."""
        a = self.angles(eps)
        w = 2.0 * np.pi * self.delta0
        return w * np.cos(a), -w * np.sin(a)

    def coords_deriv2(self, eps):
        """d^2/d(eps)^2 of (delta, omega)."""
        a = self.angles(eps)
        w = (2.0 * np.pi) ** 2 * self.delta0
        return -w * np.sin(a), -w * np.cos(a)


def loop_point(loop: CircularLoop, eps: float) -> ParamPoint:
    """Parameter point at loop progress ``eps`` (1-periodic)."""
    delta, omega, gamma = loop.coords(eps)
    return ParamPoint(float(delta), float(omega), float(gamma))


@dataclass(frozen=True)
class Schedule:
    """Quintic ramp eps(t) = d*(6 u^5 - 15 u^4 + 10 u^3), u = t/t0.

    First and second derivatives vanish at both endpoints, so synthesized
    corrections switch on and off smoothly.
    """

    t0: float
    d: int = 1

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if self.d not in (+1, -1):
            raise ValueError("orientation d must be +1 or -1")

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.t0):
            raise ScheduleDomainError(f"time outside [0, {self.t0}]")
        return t

    def eps(self, t):
        u = self._check(t) / self.t0
        return self.d * (6.0 * u**5 - 15.0 * u**4 + 10.0 * u**3)

    def eps_dot(self, t):
        u = self._check(t) / self.t0
        return self.d * (30.0 * u**4 - 60.0 * u**3 + 30.0 * u**2) / self.t0

    def eps_ddot(self, t):
        u = self._check(t) / self.t0
        return self.d * (120.0 * u**3 - 180.0 * u**2 + 60.0 * u) / self.t0**2


def schedule_eps(schedule: Schedule, t: float) -> float:
    """Loop progress at time ``t``; domain error outside [0, t0]."""
    return float(schedule.eps(t))


def chi_circ(loop: CircularLoop, eps) -> np.ndarray:
    """Closed-form sheet angle for a centered circular loop.

    pi * step[(1 - d)/2 + (eps - 1/2 + phi/(2 pi))] with step(0) = 1.  Valid
    for circles centered on the omega axis; for basepoints sitting exactly on
    the cut the numeric detector supersedes this form (the step function
    cannot express a sheet change located at the loop's endpoints).
    """
    arg = (1 - loop.d) / 2.0 + (np.asarray(eps, dtype=float) - 0.5 + loop.phi / (2.0 * np.pi))
    return np.pi * np.where(arg >= 0.0, 1.0, 0.0)


@dataclass(frozen=True)
class CutDescriptor:
    """A branch cut as a transversal coordinate plus an on-cut predicate.

    ``transverse`` changes sign when the trajectory crosses the line carrying
    the cut; ``on_cut`` decides whether the sign change happened on the cut
    itself (rather than on the line's complement).
    """

    name: str
    transverse: Callable[[np.ndarray], np.ndarray]
    on_cut: Callable[[np.ndarray, float], np.ndarray]


def _sqrt_on_cut(z, scale):
    return np.real(z) <= 1e-9 * scale


def _atan_on_cut(z, scale):
    return np.abs(np.imag(z)) >= 1.0 - 1e-12


#: cut of the principal square root: (-inf, 0]
SQRT_CUT = CutDescriptor("sqrt", transverse=np.imag, on_cut=_sqrt_on_cut)

#: cut of the principal arctan: (-i*inf, -i] + [i, i*inf)
ARCTAN_CUT = CutDescriptor("arctan", transverse=np.real, on_cut=_atan_on_cut)


@dataclass(frozen=True)
class BranchState:
    """Crossing times plus the resulting piecewise-constant sheet angle.

    The angle is ``chi0 + pi * (number of crossings at times <= t)``; a
    crossing exactly at a query time counts (step-at-zero equals one).
    """

    crossings: np.ndarray
    chi0: float = 0.0
    t_total: float = 1.0

    @property
    def n_crossings(self) -> int:
        return int(len(self.crossings))

    def count(self, t):
        return np.searchsorted(self.crossings, np.asarray(t, dtype=float), side="right")

    def chi(self, t):
        return self.chi0 + np.pi * self.count(t)

    def sheet_sign(self, t):
        """cos(chi) evaluated exactly: +-1 by crossing parity."""
        k = int(round(self.chi0 / np.pi)) + self.count(t)
        return 1.0 - 2.0 * (k % 2)


def detect_branch_crossings(
    values: np.ndarray,
    grid: np.ndarray,
    cut: CutDescriptor = SQRT_CUT,
    refine: Optional[Callable[[float], complex]] = None,
    chi0: float = 0.0,
) -> BranchState:
    """Locate the cut crossings of a sampled complex trajectory.

    ``values`` are trajectory samples on ``grid``.  A crossing is a sign
    change of the cut's transversal coordinate whose zero lies on the cut
    side.  With a ``refine`` callable the zero is bisected to
    ``CROSSING_REFINE_TOL`` relative accuracy and intervals are midpoint
    checked for hidden double crossings; without one the zero is estimated by
    linear interpolation (good to one grid interval).

    The caller must sample densely enough that at most one crossing falls
    between adjacent samples.
    """
    values = np.asarray(values, dtype=complex)
    grid = np.asarray(grid, dtype=float)
    if values.shape != grid.shape or values.ndim != 1:
        raise ValueError("values and grid must be matching 1-d arrays")
    span = grid[-1] - grid[0]
    scale = float(np.max(np.abs(values))) or 1.0

    trans = np.asarray(cut.transverse(values), dtype=float)
    side = trans >= 0.0
    flips = np.nonzero(side[:-1] != side[1:])[0]

    if refine is not None and len(grid) > 1:
        mids = 0.5 * (grid[:-1] + grid[1:])
        mid_side = np.asarray(cut.transverse(np.asarray(refine(mids), dtype=complex))) >= 0.0
        hidden = (side[:-1] == side[1:]) & (mid_side != side[:-1])
        if np.any(hidden):
            bad = grid[np.nonzero(hidden)[0]]
            raise BranchRefinementError(
                f"suspected multiple {cut.name}-cut crossings within one grid "
                f"interval near t={bad[:4]}; increase the sampling density"
            )

    times = []
    for i in flips:
        a, b = float(grid[i]), float(grid[i + 1])
        if refine is not None:
            fa = float(cut.transverse(complex(refine(a))))
            sa = fa >= 0.0
            for _ in range(80):
                m = 0.5 * (a + b)
                if (float(cut.transverse(complex(refine(m)))) >= 0.0) == sa:
                    a = m
                else:
                    b = m
                if b - a <= CROSSING_REFINE_TOL * span:
                    break
            tc = 0.5 * (a + b)
            zc = complex(refine(tc))
        else:
            fa, fb = trans[i], trans[i + 1]
            tc = a if fa == fb else a + (b - a) * abs(fa) / (abs(fa) + abs(fb))
            zc = 0.5 * (values[i] + values[i + 1])
        if bool(cut.on_cut(zc, scale)):
            times.append(tc)

    return BranchState(crossings=np.asarray(times, dtype=float), chi0=chi0, t_total=span)


@dataclass(frozen=True)
class SampledPath:
    """A parameter path sampled at increasing fractions of its duration."""

    fractions: np.ndarray
    points: np.ndarray  # shape (n, 3): columns delta, omega, gamma
    duration: float = 1.0

    def __post_init__(self):
        if self.points.shape != (len(self.fractions), 3):
            raise ValueError("points must be (n, 3) aligned with fractions")

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]


def sample_loop(loop: CircularLoop, n: int = DEFAULT_GRID, duration: float = 1.0) -> SampledPath:
    """Sample one traversal of a circular loop at ``n + 1`` points."""
    fr = np.linspace(0.0, 1.0, n + 1)
    delta, omega, gamma = loop.coords(loop.d * fr)
    return SampledPath(fr, np.column_stack([delta, omega, gamma]), duration)


def concatenate(a: SampledPath, b: SampledPath, tol: float = 1e-9) -> SampledPath:
    """Join two sampled paths end to start, rescaling to a common duration."""
    if np.max(np.abs(a.end - b.start)) > tol * max(1.0, np.max(np.abs(a.points))):
        raise ValueError("paths do not join: a(end) != b(start)")
    total = a.duration + b.duration
    wa = a.duration / total
    fr = np.concatenate([a.fractions * wa, wa + b.fractions[1:] * (1.0 - wa)])
    pts = np.concatenate([a.points, b.points[1:]], axis=0)
    return SampledPath(fr, pts, total)


def path_radicand(path: SampledPath) -> np.ndarray:
    d, om, g = path.points[:, 0], path.points[:, 1], path.points[:, 2]
    q = d + 0.5j * g
    return q * q + om * om


def path_branch_state(path: SampledPath, chi0: float = 0.0) -> BranchState:
    """Sheet bookkeeping of a sampled path (no refinement beyond the grid)."""
    return detect_branch_crossings(path_radicand(path), path.fractions, SQRT_CUT, chi0=chi0)


def loop_branch_state(loop: CircularLoop, n: int = DEFAULT_GRID) -> BranchState:
    """Sheet bookkeeping over one loop traversal, refined in loop progress.

    The initial sheet angle is the closed form at the basepoint; crossings are
    detected on the radicand trajectory and bisected.  When the closed form
    and the detector disagree over the net sheet change (it happens for
    basepoints on the cut, where the closed form is constant), the detector
    wins and the discrepancy is logged.
    """
    fr = np.linspace(0.0, 1.0, n + 1)

    def rad(f):
        d, om, g = loop.coords(loop.d * np.asarray(f))
        q = d + 0.5j * g
        return q * q + om * om

    chi0 = float(chi_circ(loop, 0.0))
    state = detect_branch_crossings(rad(fr), fr, SQRT_CUT, refine=rad, chi0=chi0)
    closed_net = float(chi_circ(loop, 1.0) - chi_circ(loop, 0.0))
    if abs(closed_net - np.pi * state.n_crossings) > 1e-9:
        log.debug(
            "closed-form sheet step (%.3f) disagrees with detector (%d crossings); "
            "using the detector",
            closed_net,
            state.n_crossings,
        )
    return state


def loop_eigenvalues(loop: CircularLoop, eps, branch: Optional[BranchState] = None):
    """Continued eigenvalue lambda_plus along the loop at progress ``eps``.

    The square-root branch and the sheet sign both flip at each crossing, so
    the strand is continuous and closes onto its negative after a traversal
    that winds the degeneracy once.
    """
    if branch is None:
        branch = loop_branch_state(loop)
    eps = np.asarray(eps, dtype=float)
    d, om, g = loop.coords(loop.d * eps)
    q = d + 0.5j * g
    return branch.sheet_sign(eps) * sqrt_upper(q * q + om * om)
