"""Non-unitary flow integration, transition statistics and braid diagnostics.

The flow solves i dPhi/dt = H(t) Phi with Phi(0) = 1 for a generally
non-Hermitian generator, so its norm can grow like exp(gamma t / 2).  The
integrator therefore stores a rescaled matrix together with an accumulated
log-magnitude, keeping the stored entries of order one; every consumer either
works with ratios (where the scale cancels) or reassembles the true flow
explicitly.

Probabilities between instantaneous eigenmodes are ratio-normalized: the
state is expanded in the biorthogonal frame at the evaluation time and the
squared magnitudes are divided by their sum.  Frames are built from the
continued mixing angle, so mode labels follow the continued eigenvalue
strands through branch crossings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .contour import BranchState, CircularLoop, Schedule
from .errors import (
    BranchRefinementError,
    DegenerateProjectionError,
    EPOnPathError,
    GeneratorError,
    PermutationExtractionError,
    StiffnessError,
)
from .spectrum import SIGMA_Y, SIGMA_Z, pauli_decompose, sqrt_upper
from .synthesis import lambda_continued, loop_kinematics, theta_continued, time_branch_state

LABELS = ("+", "-")


def _label_index(label: str) -> int:
    try:
        return LABELS.index(label)
    except ValueError:
        raise ValueError(f"mode label must be '+' or '-', got {label!r}") from None


def as_generator(generator) -> Callable[[float], np.ndarray]:
    """Accept a protocol-like object (with .hamiltonian) or a plain callable."""
    if hasattr(generator, "hamiltonian"):
        return generator.hamiltonian
    if callable(generator):
        return generator
    raise TypeError("generator must be callable or expose .hamiltonian(t)")


# ---------------------------------------------------------------------------
# adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) with rescaling

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_ERR = _DP_B5 - _DP_B4

#: rescaling window for the stored flow matrix
RESCALE_LO, RESCALE_HI = 1e-2, 1e2


@dataclass
class Flow:
    """Time-ordered flow samples, stored rescaled.

    The true flow at sample ``k`` is ``exp(log_scale[k]) * mats[k]``.
    """

    times: np.ndarray
    mats: np.ndarray        # (n, 2, 2) complex
    log_scale: np.ndarray   # (n,)

    @property
    def t0(self) -> float:
        return float(self.times[-1])

    def true_matrix(self, k: int = -1) -> np.ndarray:
        return np.exp(self.log_scale[k]) * self.mats[k]

    @property
    def final(self):
        return self.mats[-1], float(self.log_scale[-1])


def integrate_flow(
    generator,
    t0: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    t_eval: Optional[Sequence[float]] = None,
    n_out: int = 257,
    fixed_steps: Optional[int] = None,
    max_steps: int = 5_000_000,
) -> Flow:
    """Solve i dPhi/dt = H(t) Phi on [0, t0] with dense output at ``t_eval``.

    Embedded 5(4) pair with PI-free step control; the 5th-order solution is
    propagated, so fixed-step runs converge at order five.  Whenever the
    stored matrix norm leaves [1e-2, 1e2] it is renormalized and the log of
    the factor accumulated (the equation is linear, so stages rescale with
    the state).
    """
    h_of_t = as_generator(generator)
    if t_eval is None:
        t_eval = np.linspace(0.0, t0, n_out)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval[0] != 0.0 or abs(t_eval[-1] - t0) > 1e-12 * max(t0, 1.0) or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must increase from 0 to t0")

    def rhs(t, y):
        ham = h_of_t(t)
        out = -1j * (ham @ y)
        return out

    y = np.eye(2, dtype=complex)
    ls = 0.0
    t = 0.0
    out_mats = [y.copy()]
    out_scales = [ls]
    next_out = 1

    h = t0 / fixed_steps if fixed_steps else t0 * 1e-4
    k1 = rhs(t, y)
    steps = 0
    while next_out < len(t_eval):
        if steps >= max_steps:
            raise StiffnessError(f"exceeded {max_steps} steps")
        steps += 1
        if fixed_steps:
            h = t0 / fixed_steps  # reset after landing on an output node
        h = min(h, t_eval[next_out] - t)

        ks = [k1]
        for i in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(_DP_A[i], ks))
            ks.append(rhs(t + _DP_C[i] * h, yi))
        y5 = y + h * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)

        if fixed_steps:
            accept = True
        else:
            err = h * sum(e * k for e, k in zip(_DP_ERR, ks) if e != 0.0)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
            enorm = float(np.max(np.abs(err) / scale))
            if not np.isfinite(enorm):
                raise GeneratorError(f"non-finite values at t={t + h:.6g}")
            accept = enorm <= 1.0
            factor = 0.9 * (enorm + 1e-300) ** -0.2
            h_next = h * min(5.0, max(0.2, factor))

        if accept:
            t = t + h
            y = y5
            k1 = ks[-1]  # FSAL
            nrm = float(np.max(np.abs(y)))
            if not np.isfinite(nrm) or nrm == 0.0:
                raise GeneratorError(f"flow norm degenerate at t={t:.6g}")
            if nrm > RESCALE_HI or nrm < RESCALE_LO:
                y = y / nrm
                k1 = k1 / nrm
                ls += float(np.log(nrm))
            while next_out < len(t_eval) and abs(t - t_eval[next_out]) <= 1e-14 * max(t0, 1.0):
                out_mats.append(y.copy())
                out_scales.append(ls)
                next_out += 1
        if not fixed_steps:
            h = h_next
            if h < 1e-14 * t0:
                raise StiffnessError(f"step size underflow at t={t:.6g}")

    return Flow(
        times=t_eval, mats=np.asarray(out_mats), log_scale=np.asarray(out_scales, dtype=float)
    )


# ---------------------------------------------------------------------------
# instantaneous frames and transition statistics


@dataclass
class FrameTrack:
    """Eigenframes of the bare loop generator along a time grid.

    ``mats[k]`` has the continued eigenvectors as columns (unit determinant),
    ``inv_mats[k]`` holds the matching left eigenvector rows.
    """

    times: np.ndarray
    mats: np.ndarray
    inv_mats: np.ndarray
    branch: BranchState


def instantaneous_frames(
    loop: CircularLoop,
    schedule: Schedule,
    times,
    branch: Optional[BranchState] = None,
) -> FrameTrack:
    """Continued eigenframes of the bare loop generator at the given times."""
    times = np.asarray(times, dtype=float)
    if branch is None:
        branch = time_branch_state(loop, schedule)
    kin = loop_kinematics(loop, schedule, times)
    theta = theta_continued(kin, branch, times)
    half = 0.5 * (theta + np.pi)
    c, s = np.cos(half), np.sin(half)
    mats = np.empty((len(times), 2, 2), dtype=complex)
    inv = np.empty_like(mats)
    mats[:, 0, 0] = c
    mats[:, 0, 1] = -s
    mats[:, 1, 0] = s
    mats[:, 1, 1] = c
    inv[:, 0, 0] = c
    inv[:, 0, 1] = s
    inv[:, 1, 0] = -s
    inv[:, 1, 1] = c
    return FrameTrack(times=times, mats=mats, inv_mats=inv, branch=branch)


def adiabatic_hamiltonian(
    loop: CircularLoop,
    schedule: Schedule,
    t: float,
    branch: Optional[BranchState] = None,
) -> np.ndarray:
    """Generator in the instantaneous eigenframe: lambda sigma_z - (theta_dot/2) sigma_y."""
    if branch is None:
        branch = time_branch_state(loop, schedule)
    kin = loop_kinematics(loop, schedule, t)
    lam = complex(lambda_continued(kin, branch, t))
    if abs(lam) == 0.0:
        raise EPOnPathError(f"degenerate spectrum at t={t}")
    return lam * SIGMA_Z - 0.5 * complex(kin.theta_dot) * SIGMA_Y


def amplitude_matrices(flow: Flow, frames: FrameTrack) -> np.ndarray:
    """M(t) = S(t)^-1 Phi(t) S(0): amplitude of mode j given start in mode i
    is M[t, j, i].  Uses the rescaled flow; overall scale is irrelevant to
    the ratio-normalized probabilities."""
    if len(flow.times) != len(frames.times) or np.max(np.abs(flow.times - frames.times)) > 1e-12 * max(
        flow.t0, 1.0
    ):
        raise ValueError("flow and frame grids do not match")
    s0 = frames.mats[0]
    return np.einsum("nab,nbc,cd->nad", frames.inv_mats, flow.mats, s0)


def transition_prob(flow: Flow, frames: FrameTrack, i: str, j: str) -> np.ndarray:
    """Ratio-normalized probability trace P_{i,j}(t) on the flow grid."""
    m = amplitude_matrices(flow, frames)
    ii, jj = _label_index(i), _label_index(j)
    weights = np.abs(m[:, :, ii]) ** 2
    denom = weights.sum(axis=1)
    if np.any(denom == 0.0):
        raise DegenerateProjectionError("all eigenmode projections vanished")
    return weights[:, jj] / denom


def transition_probabilities(flow: Flow, frames: FrameTrack) -> dict:
    """All four probability traces keyed by (start, end) labels."""
    m = amplitude_matrices(flow, frames)
    out = {}
    for ii, i in enumerate(LABELS):
        weights = np.abs(m[:, :, ii]) ** 2
        denom = weights.sum(axis=1)
        if np.any(denom == 0.0):
            raise DegenerateProjectionError("all eigenmode projections vanished")
        for jj, j in enumerate(LABELS):
            out[(i, j)] = weights[:, jj] / denom
    return out


def fidelity_error(flow: Flow, frames: FrameTrack, i: str) -> float:
    """1 - P_{i,i} at the final time."""
    return float(1.0 - transition_prob(flow, frames, i, i)[-1])


def unitarity_defect(mat: np.ndarray, log_scale: float = 0.0) -> float:
    """Spectral norm of Phi^dagger - Phi^-1 for the true flow exp(ls)*mat."""
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    if abs(det) < 1e-300:
        raise np.linalg.LinAlgError("flow matrix is singular")
    inv = np.array([[mat[1, 1], -mat[0, 1]], [-mat[1, 0], mat[0, 0]]], dtype=complex) / det
    diff = np.exp(log_scale) * mat.conj().T - np.exp(-log_scale) * inv
    return float(np.linalg.svd(diff, compute_uv=False)[0])


# ---------------------------------------------------------------------------
# braid traces of time-dependent generators


@dataclass
class BraidTrace:
    """Continuation-matched eigenvalue strands of a generator's traceless part."""

    times: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray


def _discriminant(mat: np.ndarray) -> complex:
    fx, fy, fz, _ = pauli_decompose(mat)
    return fx * fx + fy * fy + fz * fz


def braid_trace(generator, grid) -> BraidTrace:
    """Track +-sqrt(discriminant) continuously along the sampled generator.

    Strands are matched to the previous sample by nearest continuation; when
    the two candidates are not clearly separated the interval is bisected
    with fresh generator evaluations.  A vanishing discriminant means the
    instantaneous spectrum degenerates: that is an error, with the time
    attached.
    """
    gen = as_generator(generator)
    grid = np.asarray(grid, dtype=float)
    disc = np.array([_discriminant(gen(t)) for t in grid])
    scale = float(np.max(np.abs(disc)))
    if scale == 0.0:
        raise EPOnPathError("generator is a pure scalar; no strands to track")

    lam = np.empty(len(grid), dtype=complex)
    lam[0] = complex(sqrt_upper(disc[0]))
    if abs(lam[0]) ** 2 <= 1e-24 * scale:
        raise EPOnPathError(f"instantaneous degeneracy at t={grid[0]}")
    for k in range(1, len(grid)):
        lam[k] = _continue_value(gen, grid[k - 1], lam[k - 1], grid[k], scale, 0)
    return BraidTrace(times=grid, lambda_plus=lam, lambda_minus=-lam)


def _continue_value(gen, t_a, lam_a, t_b, scale, depth):
    root = complex(sqrt_upper(_discriminant(gen(t_b))))
    if abs(root) ** 2 <= 1e-24 * scale:
        raise EPOnPathError(f"instantaneous degeneracy at t={t_b}")
    d_pos, d_neg = abs(root - lam_a), abs(-root - lam_a)
    pick = root if d_pos <= d_neg else -root
    # Ambiguous when the jump is comparable to the strand separation 2|root|.
    if min(d_pos, d_neg) > 0.8 * abs(root):
        if depth >= 24:
            raise BranchRefinementError(
                f"strand pairing ambiguous near t={t_b} at refinement depth {depth}"
            )
        t_m = 0.5 * (t_a + t_b)
        lam_m = _continue_value(gen, t_a, lam_a, t_m, scale, depth + 1)
        return _continue_value(gen, t_m, lam_m, t_b, scale, depth + 1)
    return pick


def braid_criteria(trace: BraidTrace, t0: float, tol: float = 1e-6):
    """Swap-and-closure test of a doubled loop's strands.

    Condition one: the strands swap after one traversal and return after two.
    Condition two: the one-traversal strand integral is nonzero while the
    two-traversal integral vanishes (the doubled strand is antisymmetric
    about the joining time).
    """
    times, lam = trace.times, trace.lambda_plus
    if abs(times[-1] - 2.0 * t0) > 1e-9 * max(t0, 1.0):
        raise ValueError("trace must span [0, 2*t0] from a doubled loop")
    k_mid = int(np.argmin(np.abs(times - t0)))
    if abs(times[k_mid] - t0) > 1e-9 * max(t0, 1.0):
        raise ValueError("trace grid must contain the joining time t0")
    scale = float(np.max(np.abs(lam)))

    cond1 = (
        abs(lam[0] - (-lam[k_mid])) <= tol * max(scale, 1.0)
        and abs(lam[0] - lam[-1]) <= tol * max(scale, 1.0)
    )
    int_single = np.trapezoid(lam[: k_mid + 1], times[: k_mid + 1])
    int_double = np.trapezoid(lam, times)
    cond2 = abs(int_single) > tol and abs(int_double) < tol * t0 * scale
    return bool(cond1), bool(cond2)


def winding_number(values: np.ndarray, tol: float = 1e-3):
    """Winding of a sampled closed complex trajectory around the origin.

    Sums principal-branch argument increments; the caller must sample densely
    enough that no increment reaches pi.  Returns (winding, residual).
    """
    values = np.asarray(values, dtype=complex)
    if np.any(values == 0.0):
        raise EPOnPathError("trajectory passes through the origin")
    inc = np.angle(values[1:] / values[:-1])
    if np.any(np.abs(inc) > 3.0):
        raise BranchRefinementError("argument increment too large; refine the grid")
    total = float(np.sum(inc)) / (2.0 * np.pi)
    wind = int(round(total))
    return wind, abs(total - wind)


def ep_encircle_check(generator, grid: int = 4096, max_doublings: int = 4) -> bool:
    """True iff the generator's discriminant winds an odd number of times
    around zero over the protocol (the modified loop encircles a degeneracy
    of its own spectrum)."""
    gen = as_generator(generator)
    t0 = generator.t0 if hasattr(generator, "t0") else None
    if t0 is None:
        raise TypeError("generator must expose t0 for the encircling check")
    n = grid
    for _ in range(max_doublings + 1):
        ts = np.linspace(0.0, t0, n + 1)
        disc = np.array([_discriminant(gen(t)) for t in ts])
        try:
            wind, resid = winding_number(disc)
        except BranchRefinementError:
            n *= 2
            continue
        if resid <= 1e-3:
            return wind % 2 == 1
        n *= 2
    raise BranchRefinementError("discriminant winding did not settle on an integer")


# ---------------------------------------------------------------------------
# permutation extraction


@dataclass(frozen=True)
class PermutationOp:
    """Permutation of the mode labels realized by a flow, with phases.

    ``mapping[i]`` is the destination label of source label ``LABELS[i]``;
    ``phases`` are the corresponding matrix elements in the initial
    eigenbasis, normalized by the first dominant element (one global scale).
    """

    mapping: tuple
    phases: tuple

    @property
    def is_swap(self) -> bool:
        return self.mapping == ("-", "+")

    @property
    def is_identity(self) -> bool:
        return self.mapping == ("+", "-")


def extract_permutation(
    flow_mat: np.ndarray,
    frame0: np.ndarray,
    dominance: float = 10.0,
) -> PermutationOp:
    """Express a final flow in the initial eigenbasis and read off the
    permutation from column dominance.

    Each column must be dominated by a single row by at least the dominance
    ratio, and the dominant rows must differ; otherwise the operation has no
    clear permutation structure and an error is raised instead of a guess.
    """
    det = frame0[0, 0] * frame0[1, 1] - frame0[0, 1] * frame0[1, 0]
    inv0 = np.array(
        [[frame0[1, 1], -frame0[0, 1]], [-frame0[1, 0], frame0[0, 0]]], dtype=complex
    ) / det
    m = inv0 @ flow_mat @ frame0

    rows = []
    for col in range(2):
        mags = np.abs(m[:, col])
        lead = int(np.argmax(mags))
        other = mags[1 - lead]
        if mags[lead] < dominance * other:
            raise PermutationExtractionError(
                f"column {LABELS[col]} has no dominant row "
                f"(ratio {mags[lead] / (other or np.inf):.2f} < {dominance})"
            )
        rows.append(lead)
    if rows[0] == rows[1]:
        raise PermutationExtractionError(
            f"both modes map onto {LABELS[rows[0]]}; the ideal operation is not invertible"
        )
    norm = m[rows[0], 0]
    phases = (m[rows[0], 0] / norm, m[rows[1], 1] / norm)
    return PermutationOp(mapping=(LABELS[rows[0]], LABELS[rows[1]]), phases=phases)
