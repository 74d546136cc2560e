"""Expected-revenue prediction and top-K fund allocation under exposure and risk constraints."""

from .domain import (
    AllocationInstance,
    AllocationResult,
    Customer,
    Fund,
    RevenueMatrix,
    ValidationReport,
    apply_risk_mask,
    cpme,
    is_feasible,
    objective_value,
    rpme,
    validate_instance,
)
from .errors import ConfigError, DataFormatError, DivergedError, FundAllocError, InfeasibleError

__version__ = "0.1.0"
