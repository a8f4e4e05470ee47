"""Multi-CPU cell-free massive MIMO downlink simulator."""

__version__ = "0.1.0"

from .channel import (ChannelStatistics, LargeScaleModelConfig, PathLossParams,
                      channel_stats, path_loss_db, sample_channel,
                      shadowing_field, spatial_correlation)
from .clustering import (ClusteringParams, ServingStructure,
                         build_serving_structure, cluster_fixed,
                         cluster_legacy_largest_lsf, cluster_lsf_threshold,
                         cluster_power, coherent_groups, order_cpus,
                         served_users)
from .errors import (CfMimoError, ConfigurationError, DegenerateLinkError,
                     NumericalError)
from .pilots import (PilotAssignment, PowerConfig, assign_pilots,
                     error_covariance, estimate_covariance, mmse_estimate,
                     psi_matrix, simulate_pilot_phase)
from .scenario import (Deployment, ScenarioConfig, generate_deployment,
                       wrap_distance)
from .spectral_efficiency import (FrameConfig, OracleResult, RateResult,
                                  SETerms, compute_terms, mc_oracle,
                                  mr_precoder, sinr_mixed, user_rates)

__all__ = [name for name in dir() if not name.startswith("_")]
