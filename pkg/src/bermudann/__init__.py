"""Cancellable IRS / Bermudan swaption pricing with differential networks
under a one-factor Gaussian rates model."""

from .curves import NelsonSiegelParams, atm_rate, discount_factor, ns_rate
from .lgm import (
    LgmParams,
    RebonatoParams,
    VolSchedule,
    h_function,
    implied_to_forward_vols,
    numeraire,
    rebonato_implied_vols,
    zcb,
    zeta,
)
from .products import (
    SwapSpec,
    bermudan_from_cancellable,
    breakeven_y,
    coterminal_prices,
    coterminal_set,
    default_swap,
    european_price_0,
    european_price_t,
    swap_value,
)
from .sampler import Dataset, ParamRanges, TEST_CASES, attach_joint_labels, sample_scenarios
from .simulate import MarketScenario, PathRecord, deflated_cashflow, forward_sampled_payoff, simulate_path
from .dann import DannModel, MlpConfig, forward, input_jacobian, predict_price, train
from .cascade import (
    BackwardPolicy,
    ForwardPricer,
    TimeAugmentedPricer,
    price,
    price_forward,
    train_backward,
    train_time_augmented,
)
from .oracle import LsmConfig, european_mc_price, exhaustive_zero_vol_price, lsm_price

__version__ = "0.1.0"
