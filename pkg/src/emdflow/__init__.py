"""Causal sparse signal tracking with earth mover's distance dynamics."""

from .core import (ComplexSplit, GridGeometry, MeasurementModel, TrackerConfig, canonical_split, coordinate,
                   l1_magnitude_proxy, realify_operator)
from .metrics import (DetectionOutcome, SpectralErrorConfig, aggregate, f1_score, rmse_relative, solution_rmse,
                      spectral_emd_error)
from .solver import CompositeProgram, SolveReport, SolverError, compile_report, solve, solve_lp_exact
from .spectral import OvercompleteDft, TimeFrequencyEstimate, build_dictionary, stft_baseline, track_spectrum, window_stream
from .synth import (FrequencyTrack, Scenario, add_noise, gen_freq_signal, gen_gaussian_sensing, gen_target_walk,
                    gen_theta_gamma, target_scenario)
from .trackers import (DynamicsModel, TrackerState, bpdn, bpdn_df, emd_df_complex, emd_df_nonneg, predict, rwl1,
                       rwl1_df, track_sequence)
from .transport import (FlowPlan, FluxField, distance_matrix, divergence, emd_1d_oracle, emd_beckmann, emd_general,
                        sparse_column_reduction)

__version__ = "0.1.0"
