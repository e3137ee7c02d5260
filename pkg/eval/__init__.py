from .metrics import Metrics, auc, compute_metrics
from .evaluator_cd import CD_Evaluator
from .utils import load_evaluator
