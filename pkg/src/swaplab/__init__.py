"""Simulate household swapping and ToyDown noise on census-style microdata."""

__version__ = "0.1.0"

from .errors import (AlignmentError, AuditError, CalibrationError, ConfigError,  # noqa: E402
                     DegenerateDesignError, EmptyPopulationError, GeographyError,
                     InsufficientDataError, ParseError, RegistryError, SwaplabError, ValidationError)
from .geodata import (GeoHierarchy, Household, Microdata, RaceCategory, SynthParams,  # noqa: E402
                      aggregate_counts, block_matrix, generate_synthetic, load_microdata,
                      write_microdata)
from .swap import (SwapConfig, SwapLog, assign_tiers, candidate_partners, risk_scores,  # noqa: E402
                   select_and_swap, swap_variant)
from .toydown import (CountTree, ToyDownConfig, add_noise, build_tree,  # noqa: E402
                      calibrate_epsilon, postprocess, run_toydown)
from .metrics import (entropy_decomposition, error, mean_abs_error, racial_entropy,  # noqa: E402
                      relative_error, rucc_ratio_table, swap_tabulations, variance_estimate)
from .ecoreg import ecological_regression, er_bias_experiment, generate_election  # noqa: E402
