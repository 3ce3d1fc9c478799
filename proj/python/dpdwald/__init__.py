"""Robust Wald-type tests for fixed-design GLMs (C++ core)."""

from ._core import (  # noqa: F401
    DomainError,
    NumericalError,
    design,
    fit,
    if2_profile,
    kstar,
    noncentral_chisq_cdf,
    noncentral_power,
    normal_contiguous_delta,
    power_fixed_alternative,
    run_mc,
    sample_size,
    sandwich,
    upsilon_beta,
    upsilon_phi,
    wald_linear,
    wald_simple,
)

__all__ = [name for name in dir() if not name.startswith("_")]
