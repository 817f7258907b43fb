"""Clearing, balancing settlement and fleet simulation for V2G export contracts.

The package splits along the trading day itself: market_data holds prices,
demand and the peak/valley partition; clearing runs the day-ahead contract
auction; balancing settles the real-time shortfall; simulator generates
whole days of fleet behaviour on top. reporting and cli sit apart so the
core stays importable without matplotlib.
"""

from .balancing import (
    ActiveContract,
    ActiveContractSet,
    BalancingConfig,
    BalancingScenario,
    CalibrationScenario,
    PluggedEv,
    ShortfallDistribution,
    balancing_payment,
    calibrate_const,
    export_share,
    load_balancing_scenario,
    shortfall_distribution,
)
from .clearing import (
    AcceptedContract,
    Allocation,
    ContractOffer,
    CoveringSet,
    FleetPrivateInfo,
    Hhp,
    MarketContext,
    allocate,
    demand_covering_set,
    deviation_utility,
    estimate_success_probability,
    expected_covered_quantity,
    externality_payment,
    load_contract_book,
    make_wholesale_backstop,
    truthful_bid,
)
from .errors import (
    CalibrationError,
    IncompleteSeriesError,
    V2gMarketError,
    ValidationError,
)
from .market_data import (
    HHPS_PER_DAY,
    DemandProfile,
    PeakBlock,
    PriceSeries,
    from_internal_price,
    load_demand_profile,
    load_price_series,
    partition_peaks_valleys,
    to_internal_price,
)
from .simulator import (
    DayReport,
    FleetProfile,
    SimConfig,
    SweepPoint,
    SweepResult,
    competition_sweep,
    generate_fleet_offers,
    load_sim_config,
    run_day,
    synthetic_price_series,
)

__version__ = "0.1.0"

__all__ = [
    "HHPS_PER_DAY",
    "AcceptedContract",
    "ActiveContract",
    "ActiveContractSet",
    "Allocation",
    "BalancingConfig",
    "BalancingScenario",
    "CalibrationError",
    "CalibrationScenario",
    "ContractOffer",
    "CoveringSet",
    "DayReport",
    "DemandProfile",
    "FleetPrivateInfo",
    "FleetProfile",
    "Hhp",
    "IncompleteSeriesError",
    "MarketContext",
    "PeakBlock",
    "PluggedEv",
    "PriceSeries",
    "ShortfallDistribution",
    "SimConfig",
    "SweepPoint",
    "SweepResult",
    "V2gMarketError",
    "ValidationError",
    "allocate",
    "balancing_payment",
    "calibrate_const",
    "competition_sweep",
    "demand_covering_set",
    "deviation_utility",
    "estimate_success_probability",
    "expected_covered_quantity",
    "export_share",
    "externality_payment",
    "from_internal_price",
    "generate_fleet_offers",
    "load_balancing_scenario",
    "load_contract_book",
    "load_demand_profile",
    "load_price_series",
    "load_sim_config",
    "make_wholesale_backstop",
    "partition_peaks_valleys",
    "run_day",
    "synthetic_price_series",
    "to_internal_price",
    "truthful_bid",
    "__version__",
]
