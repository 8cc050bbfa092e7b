"""Dual representation and time-consistency lab for cash-subadditive risk
measures on finite scenario trees."""
from .conditions import (StructuredModel, ablate_penalty, bifurcate_discounts,
                         bifurcate_measures, build_cocycle_penalty, check_cocycle,
                         check_locality, joint_paste, paste_measures,
                         random_structured_model, rectangular_model, structure_model,
                         verify_theorem_tc)
from .dynamic import (AggregatedRisk, DualModel, RiskModel, aggregate_rho0t,
                      check_dynamic_axioms, check_regularity, discount_decomposition,
                      eval_dynamic_rho, lift_static, minimal_penalty_dynamic,
                      penalty_aggregation_check, product_form_discount)
from .errors import *  # noqa: F401,F403
from .fileformat import load_model, parse_model, serialize_model
from .putpremium import PutPremiumModel, put_premium_model
from .report import ConsistencyReport
from .static import (DualDictionary, StaticRiskMeasure, check_static_axioms,
                     conjugate_grid_oracle, decompose_subprobability, eval_static_rho,
                     minimal_penalty_static, oracle_diverges)
from .timecons import (check_constancy, check_strong_tc, check_tc_implications,
                       check_weak_star_tc, check_weak_tc)
from .tree import (FilteredSpace, SubProbability, TreeSpec, build_tree,
                   conditional_expectation, density_process, nodewise_max)

__version__ = "0.1.0"
