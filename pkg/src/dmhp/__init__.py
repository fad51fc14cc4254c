"""Dual mixture self-exciting processes for groups of reshare cascades."""

__version__ = "0.1.0"

from .borel import (borel_log_pmf, borel_mean_var, borel_pmf, borel_tanner_log_pmf,
                    borel_tanner_mean_var, fit_borel_mle)
from .cascades import Cascade, CascadeGroup, cascade_size, truncate
from .characterize import (DiffusionEmbedding, EmbeddingEdges, build_embedding, corpus_edges,
                           embedding_distance, pool_publisher_embedding, summarize, wasserstein1)
from .forecast import (PublisherModel, absolute_relative_error, expected_holdout_ll,
                       forecast_item, observe_item, pool_publisher_model, posterior_size_pmf,
                       predict_cascade_size, predict_cascade_variance,
                       predict_item_popularity, residual_intensity)
from .kernels import KernelFamily, KernelParams, kernel_log_pdf, kernel_pdf, kernel_tail
from .likelihood import (HawkesParams, check_separability, full_log_likelihood, intensity,
                         log_likelihood_g, log_likelihood_n)
from .mixtures import (BMMConfig, BorelMixture, DualMixture, FitReport, KMMConfig,
                       KernelMixture, assemble_dual, fit_bmm, fit_dual, fit_kmm, select_k_bmm)
from .quantiles import weighted_quantiles
from .simulate import SimConfig, simulate_cascade, simulate_cascades, simulate_continuation

__all__ = [name for name in dir() if not name.startswith("_")]
