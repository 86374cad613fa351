"""Market-based statistical moments of trade data.

Moments of trade value, volume, price and return over averaging windows,
their aggregation over risk-coordinate cells and the whole market,
densities from finite moment sets and transport of collective variables
through the risk domain.
"""

from .errors import (CFLError, ConsistencyError, DegenerateError, InputError,
                     InsufficientCoverageError, InsufficientDecayError, MarketMomentsError,
                     MomentOverflowError, NegativeDensityError, NumericError,
                     ShiftOutOfRangeError)
from .trade_data import (RiskVector, SynthSpec, TickRecord, TickSeries, generate_synthetic,
                         read_risks, read_ticks, repair_gaps, to_dense, validate_series)
from .moments import (MomentSet, WindowConfig, compute_moments, derived_central_stats,
                      frequency_price_moments, past_value_moments, price_from_return,
                      price_moments, return_moments, trade_moments)
from .risk_domain import (AggregationConfig, RiskCellGrid, aggregate, assign_cells,
                          collective_moments, market_moments, markowitz_portfolio_return)
from .prob_approx import (CharFnApprox, DensityGrid, GridSpec, build_charfn,
                          charfn_to_density, cumulants_to_moments, density_from_moments,
                          moments_to_cumulants)
from .econ_media import (MediaGrid, MediaState, Scenario, TransitionMatrix, compute_flow,
                         integrate_market, make_state, mean_risk, simulate, step_continuity,
                         step_flow, velocity_from_transition)

__version__ = "0.1.0"
