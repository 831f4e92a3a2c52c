"""Thermodynamic formalism for finitely generated rational semigroups.

Preimage-tree partition sums, the zero of the pressure, Lyapunov exponents
of the maximal entropy measure, and Julia-set imaging.
"""

__version__ = "0.1.0"

from .maps import RationalMap, parse_map  # noqa: E402
from .semigroup import MultiMap, certify_expanding, check_osc, detect_power_form  # noqa: E402
from .thermo import bowen_parameter, build_preimage_tree, poincare_exponent, verify_inequality  # noqa: E402

__all__ = [
    "MultiMap",
    "RationalMap",
    "bowen_parameter",
    "build_preimage_tree",
    "certify_expanding",
    "check_osc",
    "detect_power_form",
    "parse_map",
    "poincare_exponent",
    "verify_inequality",
]
