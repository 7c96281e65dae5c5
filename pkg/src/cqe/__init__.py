"""Conditional quantile estimation for watch-time prediction."""

from .config import RunConfig
from .head import head_backward, head_forward, make_levels
from .inference import StrategyConfig, cde, cse, dqc, quantile_at
from .loss import pinball, pinball_grad, qr_loss
from .model import CQEModel, OracleModel, evaluate, load_model, save_model, train

__version__ = "0.1.0"
