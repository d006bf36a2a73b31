"""Relative-error dimension reduction for shift-invariant kernel distances."""

__version__ = "0.1.0"

from .errors import InvalidInputError, KernelDRError, OutOfBoundsError, UndefinedStatisticError
from .kernels import (BoundedSpec, Family, ShiftInvariantKernel, kernel_distance, kernel_eval,
                      parse_kernel_spec, s_k_bounded_sup, s_k_statistic, sample_spectral)
from .rff import RffMap, centered_moment_mc, cos_power_moment, rff_embed, rff_new
from .newlap import (NewLapMap, NodeId, newlap_embed, newlap_integer, newlap_new, prefix_sum_sample,
                     preprocess, reference_embed, unary_embed)
from .baselines import GramMatrix, gram_build, jl_distance, jl_distances, svd_distance, svd_distances
from .analysis import (Partition, TradeoffRecord, kernel_kmeans_cost_exact, kmeans_cost_embedded,
                       lower_bound_experiment, max_relative_error)
