"""Noise-averaged fidelity error under quasi-static amplitude uncertainty.

The uncertainty model is a Gaussian-distributed, time-constant sigma_z offset
added to the generator, one draw per experimental realization.  The average
over realizations is a one-dimensional Gaussian integral, evaluated by
Gauss-Hermite quadrature (each node costs one full flow integration).  A
batched fixed-step Monte-Carlo average is kept as an independent cross-check
route; it shares nothing with the quadrature path but the generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import FrameTrack, _label_index, integrate_flow
from .errors import IntegrationError
from .spectrum import SIGMA_Z
from .synthesis import Protocol


@dataclass(frozen=True)
class NoiseModel:
    """Standard deviation of the sigma_z offset and the quadrature order."""

    beta: float
    quadrature_order: int = 15

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.quadrature_order < 3:
            raise ValueError("quadrature_order must be >= 3")


def perturbed_generator(protocol: Protocol, delta_shift: float) -> Protocol:
    """Protocol with a constant sigma_z offset added to its fields."""
    if delta_shift == 0.0:
        return protocol
    return protocol.with_sigma_z_shift(delta_shift)


def _final_probability(protocol, frames, ii, jj, rtol, atol):
    flow = integrate_flow(
        protocol,
        frames.times[-1],
        rtol=rtol,
        atol=atol,
        t_eval=np.array([0.0, frames.times[-1]]),
    )
    s0 = frames.mats[0]
    m = frames.inv_mats[-1] @ flow.mats[-1] @ s0
    weights = np.abs(m[:, ii]) ** 2
    total = weights.sum()
    if total == 0.0:
        raise IntegrationError("final state projections vanished")
    return float(weights[jj] / total)


def noise_averaged_error(
    protocol: Protocol,
    frames: FrameTrack,
    i: str,
    j: str,
    noise: NoiseModel,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> float:
    """1 - <P_{i,j}(t0)> averaged over the Gaussian offset by quadrature.

    Nodes are evaluated in a fixed order and summed deterministically.  A
    zero-width model reduces to the unperturbed error.
    """
    ii, jj = _label_index(i), _label_index(j)
    if noise.beta == 0.0:
        return 1.0 - _final_probability(protocol, frames, ii, jj, rtol, atol)
    nodes, weights = np.polynomial.hermite.hermgauss(noise.quadrature_order)
    acc = 0.0
    for x, w in zip(nodes, weights):
        shift = float(np.sqrt(2.0) * noise.beta * x)
        p = _final_probability(perturbed_generator(protocol, shift), frames, ii, jj, rtol, atol)
        acc += w * p
    return 1.0 - acc / np.sqrt(np.pi)


def mc_noise_averaged_error(
    protocol: Protocol,
    frames: FrameTrack,
    i: str,
    j: str,
    beta: float,
    n_samples: int = 10_000,
    seed: int = 0,
    n_steps: int = 2000,
):
    """Monte-Carlo estimate of the noise-averaged error and its standard error.

    Independent of the quadrature path: classical fixed-step fourth-order
    Runge-Kutta, batched over all noise draws at once.  Meant for spot
    checks, not production averaging.
    """
    ii, jj = _label_index(i), _label_index(j)
    t0 = frames.times[-1]
    rng = np.random.default_rng(seed)
    shifts = rng.normal(0.0, beta, size=n_samples)

    h_of = protocol.fields
    sz = SIGMA_Z
    ys = np.broadcast_to(np.eye(2, dtype=complex), (n_samples, 2, 2)).copy()

    def rhs(t, ys):
        fx, fy, fz = (complex(np.asarray(v).reshape(())) for v in h_of(t))
        base = np.array([[fz, fx - 1j * fy], [fx + 1j * fy, -fz]], dtype=complex)
        hams = base[None, :, :] + shifts[:, None, None] * sz[None, :, :]
        return -1j * np.einsum("nab,nbc->nac", hams, ys)

    h = t0 / n_steps
    for step in range(n_steps):
        t = step * h
        t_end = min((step + 1) * h, t0)  # guard fp drift past the domain edge
        k1 = rhs(t, ys)
        k2 = rhs(t + 0.5 * h, ys + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, ys + 0.5 * h * k2)
        k4 = rhs(t_end, ys + h * k3)
        ys = ys + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % 200 == 199:
            # probabilities are ratio-normalized, so per-batch rescaling is free
            nrm = np.max(np.abs(ys))
            if nrm > 1e6:
                ys = ys / nrm

    m = np.einsum("ab,nbc,cd->nad", frames.inv_mats[-1], ys, frames.mats[0])
    weights = np.abs(m[:, :, ii]) ** 2
    probs = weights[:, jj] / weights.sum(axis=1)
    errs = 1.0 - probs
    return float(np.mean(errs)), float(np.std(errs, ddof=1) / np.sqrt(n_samples))
