from .base_handler import BaseHandler, TrainConfig
from .kcd_handler import KCDHandler
from .experiments import load_handler, restore_from_checkpoint, check_checkpoint_split, predict_logs
from .experiments import evaluate_cold_warm, dropout_sweep, export_embeddings
