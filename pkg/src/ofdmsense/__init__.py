"""Joint azimuth/range/velocity estimation for monostatic OFDM sensing.

Library layout:

- ``scenario``: configuration, targets, validation, phase-step formulas
- ``signal_model``: observation synthesis, steering vectors, binary IO
- ``smoothing``: sliding-window snapshot extraction
- ``subspace``: covariance, eigensplit, subspace augmentation
- ``init1d``: per-dimension root estimation and 3D pairing
- ``music2d``: 2D null-spectrum descent with subspace updating
- ``pipeline``: full estimator, DFT baseline, grid-search oracle
- ``crb``: estimation variance bounds
- ``bench``: Monte-Carlo RMSE/timing harness (CLI in ``cli``)
"""

from .scenario import (Scenario, ScenarioError, SmoothingConfig, SystemConfig,
                       Target, ValidationReport, load_scenario, phase_increments,
                       rayleigh_widths, save_scenario, validate, with_snr)
from .signal_model import (Manifold, Observation, SteeringSet, flatten,
                           load_observation, manifold, save_observation, steering,
                           synthesize, trial_seed, unflatten)
from .smoothing import SnapshotMatrix, smooth_1d, smooth_2d, smooth_3d
from .subspace import SubspacePair, augment_noise_subspace, covariance, eig_split
from .init1d import (InitialTriplets, RootPolynomial, build_root_polynomial,
                     pair_mle, roots_to_params, run_init3d)
from .music2d import (Kappa2D, LmSettings, Pair2DEstimates, jacobian, lm_minimize,
                      null_spectrum, order_targets, run_isu2dmusic)
from .crb import (CrbResult, crb_from_fisher, crb_multi_target,
                  crb_single_closed_form, fisher_blocks, manifold_derivative)
from .pipeline import (EstimateSet, estimate_3d_dft, grid_music_oracle, rematch,
                       run_pi2dmusic)
from .bench import RmseRow, RunSpec, emit_csv, run_sweep, run_timing

__version__ = "0.1.0"
