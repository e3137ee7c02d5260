from .adam import Adam, OptimizerState, adam_step
from .optim_factory import create_optimizer
