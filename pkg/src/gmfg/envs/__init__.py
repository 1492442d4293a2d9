"""Environments, the model contract and the simulator oracles."""
from .auction import AuctionModel, AuctionParams, auction_reward, budget_next, opponent_max_law
from .base import (FrozenMDP, GMFGModel, InvalidAction, InvalidInput, Outcomes, is_empirical,
                   outcomes_from_kernel, population_step, strong_simulate, weak_simulate)
from .pricing import (NPlayerPricing, PricingModel, PricingParams, clearing_price,
                      inventory_next, pricing_reward)
from .toy import ToyModel, ToyParams

_MODELS = {
    "pricing": (PricingModel, PricingParams),
    "auction": (AuctionModel, AuctionParams),
    "toy": (ToyModel, ToyParams),
}


def make_model(name: str, **params) -> GMFGModel:
    """Build an environment by name from keyword parameters."""
    try:
        cls, prm_cls = _MODELS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(_MODELS)}") from None
    return cls(prm_cls(**params))


def param_class(name: str):
    return _MODELS[name][1]
