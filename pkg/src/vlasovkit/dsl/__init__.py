"""Generator descriptions: parsing, scaling, limit coefficients and derivation."""

from .ast import DSLError, GeneratorSpec, RateFormError
from .coefficients import VlasovCoefficient, k_coefficient, vlasov_coefficient
from .derive import canonical_formula, derive_vlasov
from .parser import parse, parse_file
from .scaling import ScalingError, ScalingReport, analyze_scaling, evaluate_rate, scale

__all__ = [
    "DSLError", "GeneratorSpec", "RateFormError", "ScalingError", "ScalingReport",
    "VlasovCoefficient", "analyze_scaling", "canonical_formula", "derive_vlasov",
    "evaluate_rate", "k_coefficient", "parse", "parse_file", "scale", "vlasov_coefficient",
]
