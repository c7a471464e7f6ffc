"""Principal component analysis in asymmetric L1/L2 norms.

Expectile and quantile statistics, asymmetric weighted least-squares
low-rank fits, three tail principal-component constructions, a Monte-Carlo
benchmark harness and a temperature-residual pipeline.
"""

__version__ = "0.1.0"

from .backend import BACKEND_NAME
from .components import (
    ComponentSet,
    PecState,
    bottom_up,
    explained_variance,
    pec_center,
    pec_cov,
    principal_expectile,
    top_down,
)
from .core import (
    ExpectileResult,
    TauLevel,
    asym_l1_norm,
    asym_l2_norm_sq,
    asymptotic_variance,
    expectile_1d,
    quantile_1d,
    t_function,
    tau_deviation,
    tau_variance,
)
from .exceptions import ContractError, DegenerateInputError, DomainError
from .laws import (
    Factorization,
    SubspaceConstraint,
    laws_fit,
    objective_value,
    weighted_ls_update_cols,
    weighted_ls_update_rows,
)

__all__ = [
    "BACKEND_NAME",
    "ComponentSet",
    "ContractError",
    "DegenerateInputError",
    "DomainError",
    "ExpectileResult",
    "Factorization",
    "PecState",
    "SubspaceConstraint",
    "TauLevel",
    "__version__",
    "asym_l1_norm",
    "asym_l2_norm_sq",
    "asymptotic_variance",
    "bottom_up",
    "expectile_1d",
    "explained_variance",
    "laws_fit",
    "objective_value",
    "pec_center",
    "pec_cov",
    "principal_expectile",
    "quantile_1d",
    "t_function",
    "tau_deviation",
    "tau_variance",
    "top_down",
    "weighted_ls_update_cols",
    "weighted_ls_update_rows",
]
