import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.stats import rankdata

from utils.errors import ContractError, ShapeError, UndefinedMetricError


@dataclass
class Metrics:
    subset: str
    auc: float
    acc: float
    rmse: float
    n: int

    def to_dict(self):
        return asdict(self)


def _as_arrays(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels differ in length", scores.shape, labels.shape)
    return scores, labels

def auc(scores, labels) -> float:
    r"""ROC AUC in Mann-Whitney form: (#concordant pos-neg pairs + 0.5 * #ties) / (#pos * #neg)."""
    scores, labels = _as_arrays(scores, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC needs both classes (got {n_pos} positives and {n_neg} negatives).")
    # average ranks give ties half credit
    ranks = rankdata(scores, method='average')
    u_stat = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))

def compute_metrics(scores, labels, threshold: float = 0.5, subset: str = 'all', allow_undefined_auc: bool = False):
    r"""AUC, accuracy at `threshold` and RMSE of probability scores.

    Args:
        allow_undefined_auc (bool): report NaN instead of raising when only one class is present.
    """
    scores, labels = _as_arrays(scores, labels)
    if scores.shape[0] == 0:
        raise ContractError("Cannot compute metrics on an empty set.")
    acc = float(np.mean((scores >= threshold).astype(np.float64) == labels))
    rmse = float(math.sqrt(np.mean((scores - labels) ** 2)))
    try:
        auc_value = auc(scores, labels)
    except UndefinedMetricError:
        if not allow_undefined_auc:
            raise
        print(f"[warning] AUC is undefined on the single-class `{subset}` subset; reported as NaN.")
        auc_value = float('nan')
    return Metrics(subset=subset, auc=auc_value, acc=acc, rmse=rmse, n=int(scores.shape[0]))
