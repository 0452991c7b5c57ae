"""Holomorphic spectrum and eigenframes of the static two-mode non-Hermitian Hamiltonian.

The model is a pair of linearly coupled, damped modes reduced to its traceless
part,

    H = -(delta + i*gamma/2) sigma_z + omega sigma_x,

with real detuning ``delta``, real coupling ``omega`` and damping contrast
``gamma`` (positive in physical use).  Its eigenvalues are the two values of a
complex square root, so they live on a two-sheeted surface: every quantity
here takes an explicit sheet angle ``chi`` (an integer multiple of pi) that
selects the sheet and lets callers continue the spectrum smoothly along
parameter loops that wind around the degeneracy.

Branch conventions (fixed once, used everywhere):

* square root: principal branch, cut on (-inf, 0]; a value exactly on the cut
  is the limit from Im > 0, i.e. sqrt(-r) = +i sqrt(r) for r > 0;
* complex arctan: principal branch, cut on (-i*inf, -i] + [i, i*inf); values
  exactly on the cut take the limit from Re > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoalescenceError, DegenerateSpectrumError, SingularFrameError

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

#: default absolute tolerance for degeneracy / cut-region tests
#: (inputs assumed of order one in units of the damping contrast)
EP_TOL = 1e-12


def sqrt_upper(z):
    """Principal square root; on the cut (-inf, 0] return the limit from Im > 0.

    Works elementwise on arrays.  Plain ``sqrt`` honours the sign of a signed
    zero imaginary part, which would make values exactly on the cut depend on
    how the argument was computed; forcing +0.0 there pins the upper limit.
    """
    z = np.asarray(z, dtype=complex)
    on_axis = z.imag == 0.0
    if np.any(on_axis):
        z = np.where(on_axis, z.real + 0.0j, z)
    return np.sqrt(z)


def atan_principal(z):
    """Principal complex arctan; on-cut values take the limit from Re > 0."""
    z = np.asarray(z, dtype=complex)
    on_cut = (z.real == 0.0) & (np.abs(z.imag) >= 1.0)
    if np.any(on_cut):
        z = np.where(on_cut, 1j * z.imag + 0.0, z)
    return np.arctan(z)


@dataclass(frozen=True)
class ParamPoint:
    """A point (delta, omega, gamma) in control-parameter space, in rate units."""

    delta: float
    omega: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.delta) and np.isfinite(self.omega) and np.isfinite(self.gamma)):
            raise ValueError("parameter point must be finite")

    @property
    def zeta(self) -> complex:
        """Complex detuning delta + i*gamma/2 (the sigma_z coefficient is -zeta)."""
        return self.delta + 0.5j * self.gamma

    def as_tuple(self):
        return (self.delta, self.omega, self.gamma)


@dataclass(frozen=True)
class HoloSpectrum:
    """Sheet-resolved spectrum at one parameter point."""

    lambda_plus: complex
    lambda_minus: complex
    chi: float
    theta: complex


def hamiltonian_sym(p: ParamPoint) -> np.ndarray:
    """Traceless two-mode matrix -(delta + i*gamma/2) sigma_z + omega sigma_x."""
    return -p.zeta * SIGMA_Z + p.omega * SIGMA_X


def radicand(p: ParamPoint) -> complex:
    """(delta + i*gamma/2)**2 + omega**2; zero exactly at a degeneracy."""
    return p.zeta**2 + p.omega**2


def is_ep(p: ParamPoint, tol: float = EP_TOL) -> bool:
    """True iff the spectrum is degenerate at ``p`` within ``tol``.

    Both defect residuals must vanish: -gamma**2/4 + omega**2 + delta**2 and
    delta*gamma.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    res1 = abs(-0.25 * p.gamma**2 + p.omega**2 + p.delta**2)
    res2 = abs(p.delta * p.gamma)
    return res1 <= tol and res2 <= tol


def on_branch_cut_region(p: ParamPoint, tol: float = EP_TOL) -> bool:
    """True iff the radicand lies on the square-root cut (-inf, 0] within ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return (-0.25 * p.gamma**2 + p.omega**2 + p.delta**2 <= tol) and abs(p.delta * p.gamma) <= tol


def holomorphic_eigenvalues(p: ParamPoint, chi: float) -> HoloSpectrum:
    """Sheet-resolved eigenvalue pair +-cos(chi)*sqrt(radicand).

    Raises ``DegenerateSpectrumError`` at an exceptional point, where no
    branch assignment is possible.
    """
    if is_ep(p):
        raise DegenerateSpectrumError(f"spectrum degenerate at {p}")
    lam = np.cos(chi) * complex(sqrt_upper(radicand(p)))
    return HoloSpectrum(lambda_plus=lam, lambda_minus=-lam, chi=chi, theta=theta(p, chi))


def theta(p: ParamPoint, chi: float) -> complex:
    """Complex mixing angle of the eigenframe on sheet ``chi``.

    Half-angle form -2*arctan[omega / (zeta + sqrt(zeta**2 + omega**2))] + chi,
    so the same sheet angle glues both the square root and the arctan.
    """
    q = p.zeta
    root = complex(sqrt_upper(radicand(p)))
    den = q + root
    if den == 0:
        raise SingularFrameError(f"frame parametrization singular at {p}")
    if p.omega == 0.0 and abs(den) < 1e-8 * max(abs(q), 1e-300):
        # On the ray where the principal root lands on the opposite branch
        # (omega = 0, delta < 0) the ratio omega/den is 0/~0; the continued
        # angle passes through pi there.  The sign of pi is immaterial: the
        # frame is 2*pi-periodic up to an overall sign.
        return np.pi + chi
    return complex(-2.0 * atan_principal(p.omega / den)) + chi


def frame_from_angle(angle: complex) -> np.ndarray:
    """Unit-determinant frame whose columns are the eigenvectors for mixing
    angle ``angle``: column j is (cos, sin) of (angle + pi)/2 rotated into
    place so that conjugation orders the spectrum as (lambda_plus, lambda_minus)."""
    half = 0.5 * (angle + np.pi)
    c, s = np.cos(half), np.sin(half)
    return np.array([[c, -s], [s, c]], dtype=complex)


def frame_from_angle_inv(angle: complex) -> np.ndarray:
    """Closed-form inverse of :func:`frame_from_angle` (determinant is one)."""
    half = 0.5 * (angle + np.pi)
    c, s = np.cos(half), np.sin(half)
    return np.array([[c, s], [-s, c]], dtype=complex)


def frame_adiabatic(p: ParamPoint, chi: float) -> np.ndarray:
    """Change-of-frame matrix S with S^-1 H S = diag(lambda_plus, lambda_minus).

    Built from the mixing angle, so it stays non-degenerate where the raw
    eigenvector pair of :func:`right_eigenvectors` momentarily vanishes, and
    it has unit determinant (columns carry a fixed natural normalization).
    """
    return frame_from_angle(theta(p, chi))


def frame_adiabatic_inv(p: ParamPoint, chi: float) -> np.ndarray:
    """Inverse frame; its rows are the matching left eigenvectors."""
    return frame_from_angle_inv(theta(p, chi))


def right_eigenvectors(p: ParamPoint, chi: float):
    """Raw right eigenvector pair (v_plus, v_minus) with entries
    [-(delta + i*gamma/2) + lambda_j, omega].

    Deliberately unnormalized: the entries are holomorphic along cut-avoiding
    paths, which is what continuation needs.  The pair degenerates at isolated
    points with omega = 0 where one eigenvalue equals the complex detuning;
    use :func:`frame_adiabatic` when a globally non-degenerate frame matters.
    """
    if is_ep(p):
        raise CoalescenceError(f"eigenvectors coalesce at {p}")
    spec = holomorphic_eigenvalues(p, chi)
    v_plus = np.array([-p.zeta + spec.lambda_plus, p.omega], dtype=complex)
    v_minus = np.array([-p.zeta + spec.lambda_minus, p.omega], dtype=complex)
    return v_plus, v_minus


def eigenvector_matrix(p: ParamPoint, chi: float) -> np.ndarray:
    """Raw eigenvectors as columns; singular where the raw pair degenerates."""
    v_plus, v_minus = right_eigenvectors(p, chi)
    return np.column_stack([v_plus, v_minus])


def left_eigenvectors(p: ParamPoint, chi: float):
    """Left eigenvector rows biorthonormal to :func:`right_eigenvectors`."""
    mat = eigenvector_matrix(p, chi)
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    if abs(det) < 1e-14 * max(np.abs(mat).max() ** 2, 1e-300):
        raise CoalescenceError(f"left eigenvectors undefined at {p} (raw pair degenerate)")
    inv = np.array([[mat[1, 1], -mat[0, 1]], [-mat[1, 0], mat[0, 0]]], dtype=complex) / det
    return inv[0], inv[1]


def pauli_decompose(mat: np.ndarray):
    """Split a 2x2 matrix into (f_x, f_y, f_z, trace/2) Pauli coefficients."""
    fx = 0.5 * (mat[0, 1] + mat[1, 0])
    fy = 0.5j * (mat[0, 1] - mat[1, 0])
    fz = 0.5 * (mat[0, 0] - mat[1, 1])
    id_part = 0.5 * (mat[0, 0] + mat[1, 1])
    return fx, fy, fz, id_part


def pauli_compose(fx, fy, fz, id_part=0.0) -> np.ndarray:
    """Inverse of :func:`pauli_decompose`."""
    return np.array(
        [[fz + id_part, fx - 1j * fy], [fx + 1j * fy, -fz + id_part]], dtype=complex
    )
