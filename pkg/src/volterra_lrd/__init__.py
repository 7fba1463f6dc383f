"""Diagonal-included Volterra processes with long memory.

Kernels and their traces (``kernels``, ``traces``), partition and Appell
combinatorics (``combinatorics``), path simulation and the off-diagonal
decomposition (``simulate``, ``mixture``), limit experiments (``limits``)
and seeded streams with statistics (``mc``).
"""
from .errors import (
    ArgumentError,
    DomainError,
    MomentUnavailable,
    NumericError,
    ResourceError,
    VolterraError,
)
from .kernels import (
    Max,
    Min,
    Perturbed,
    PowerSum,
    ProductPower,
    RatioForm,
    Scale,
    Sum,
    eval_kernel,
    hurst,
    symmetrize,
    validate_ghkb,
)
from .traces import QuadratureConfig, TraceKernel, eval_h_t, l2_norm_h_t, trace_kernel
from .combinatorics import (
    Partition,
    TermIndex,
    appell_family,
    c_coeff,
    d_coeff,
    enumerate_partitions,
    enumerate_terms,
)
from .simulate import NoiseSpec, TruncatedKernel, decompose_path, exact_mean, simulate_path
from .limits import build_limit_spec, classify_memory

__version__ = "0.1.0"
