"""Signatures, expected signatures and signature cumulants in the truncated tensor algebra."""

from .algebra import (
    FLOAT,
    RATIONAL,
    OuterElement,
    TensorSeries,
    UsageError,
    ad_pow,
    apply_outer,
    bracket,
    concat_mul,
    dilate,
    exp_series,
    group_inverse,
    log_series,
    norm_max,
    series_from_json,
    series_to_json,
)
from .filtration import (
    FiltrationTree,
    cond_expect,
    discrete_cumulants,
    expected_signature_direct,
    expected_signature_recursive,
    martingale_identity_residual,
)
from .lie import (
    apply_G,
    apply_H,
    apply_Q,
    bch_exact,
    bch_log_signature,
    bch_psi,
    bernoulli,
    dynkin_is_lie,
    lyndon_basis,
)
from .multivariate import SymSeries, project_sym, sym_exp, sym_log
from .signatures import DrivePath, log_signature, marcus_signature, signature

__version__ = "0.1.0"
