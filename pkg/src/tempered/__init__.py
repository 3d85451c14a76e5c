"""Hermite-expansion calculus for tempered generalized functions."""

from .algebra import (
    associated, leibniz_check, moderation_class, seq_add, seq_arith, seq_convolve,
    seq_derive, seq_fourier, seq_from_function, seq_integrate, seq_mul, seq_mul_poly,
    seq_norm, seq_pairing, seq_point_value, seq_scale, seq_scale_tn, symmetric_product,
    tn_arith, tn_associated, tn_from_real,
)
from .dist import (
    CoefficientStream, embed, hermite_stream, stream_classic, stream_derive,
    stream_general, w_values,
)
from .errors import (
    BackendError, CapExceeded, GridOverflow, NonFiniteError, PrecisionError, TemperedError,
)
from .gauss import (
    Full, GaussianPolySum, GaussianTerm, HalfLine, IntervalUnion, gp_add, gp_arith,
    gp_convolve, gp_derive, gp_eval, gp_fourier, gp_from_json, gp_inner, gp_inner_norm,
    gp_integral, gp_mul, gp_mul_poly, gp_norm, gp_number_op, gp_scale, gp_to_json,
    parse_region,
)
from .hermite import (
    HermiteCoefficients, cd_closed_form, cd_kernel, hermite_at_zero, hermite_fn, hermite_values, project,
    synth,
)
from .precision import PrecisionContext, get_context, precision
from .sequences import RepSequence, TemperedNumber

__version__ = "0.1.0"
