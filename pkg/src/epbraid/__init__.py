"""Fast, robust eigenvalue-braiding control for a two-mode non-Hermitian system.

Synthesis and verification of control protocols that steer a damped two-mode
system around a spectral degeneracy so that its complex eigenvalues braid:
sheet-resolved spectra, branch-crossing bookkeeping, transitionless and
dressed corrections with validity gating, non-unitary flow integration,
robustness averaging and an optomechanical realization map.
"""

__version__ = "0.1.0"

from .contour import (
    BranchState,
    CircularLoop,
    SampledPath,
    Schedule,
    chi_circ,
    concatenate,
    detect_branch_crossings,
    loop_branch_state,
    loop_eigenvalues,
    loop_point,
    sample_loop,
    schedule_eps,
)
from .dynamics import (
    BraidTrace,
    Flow,
    FrameTrack,
    PermutationOp,
    adiabatic_hamiltonian,
    braid_criteria,
    braid_trace,
    ep_encircle_check,
    extract_permutation,
    fidelity_error,
    instantaneous_frames,
    integrate_flow,
    transition_prob,
    transition_probabilities,
    unitarity_defect,
)
from .optomech import (
    InversionResult,
    OptomechParams,
    effective_hamiltonian,
    invert_controls,
    susceptibility,
)
from .robustness import NoiseModel, mc_noise_averaged_error, noise_averaged_error, perturbed_generator
from .spectrum import (
    HoloSpectrum,
    ParamPoint,
    frame_adiabatic,
    frame_adiabatic_inv,
    hamiltonian_sym,
    holomorphic_eigenvalues,
    is_ep,
    on_branch_cut_region,
    radicand,
    right_eigenvectors,
    theta,
)
from .synthesis import (
    DressingAngle,
    HyperGaussianMask,
    MaskRanges,
    Protocol,
    RaddResult,
    radd_dressing_angle,
    radd_optimize,
    rms,
    satd_dressing_angle,
    satd_fields,
    td_correction,
    uncorrected_protocol,
)
