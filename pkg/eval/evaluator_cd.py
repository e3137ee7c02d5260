###################################################
# Evaluator for cognitive diagnosis predictions
###################################################
import numpy as np
import torch
from sklearn.calibration import calibration_curve

from loss.loss_cdm import bce_loss
from .metrics import compute_metrics


class CD_Evaluator(object):
    """Performance evaluator for correctness probabilities of response logs"""
    def __init__(self, threshold=0.5, **kws):
        super(CD_Evaluator, self).__init__()
        self.kws = kws
        self.threshold = threshold
        self.valid_functions = {
            'auc': self._auc,
            'acc': self._acc,
            'rmse': self._rmse,
            'loss': self._loss,
            'ece': self._ece,
        }
        self.valid_metrics = ['auc', 'acc', 'rmse', 'loss', 'ece']

    def _check_metrics(self, metrics):
        for m in metrics:
            assert m in self.valid_metrics, f"Metric {m} is not supported."

    def _pre_compute(self, data):
        """
        data['y_hat']: [N, ] predicted probabilities; data['y']: [N, ] binary labels.
        """
        self.y, self.y_hat = data['y'], data['y_hat']
        if type(self.y) == torch.Tensor:
            self.y = self.y.detach().cpu().reshape(-1).numpy()
        if type(self.y_hat) == torch.Tensor:
            self.y_hat = self.y_hat.detach().cpu().reshape(-1).numpy()
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.y_hat = np.asarray(self.y_hat, dtype=np.float64).reshape(-1)
        assert self.y.shape[0] == self.y_hat.shape[0]
        assert ((self.y_hat <= 1.0) & (self.y_hat >= 0)).all(), "The prediction must be probabilities in [0, 1]."
        self.metrics = compute_metrics(self.y_hat, self.y, threshold=self.threshold, allow_undefined_auc=True)

    def _auc(self):
        return self.metrics.auc

    def _acc(self):
        return self.metrics.acc

    def _rmse(self):
        return self.metrics.rmse

    def _loss(self):
        # mean BCE, for logging
        with torch.no_grad():
            val_loss = bce_loss(torch.from_numpy(self.y_hat), torch.from_numpy(self.y), reduction='mean')
        return val_loss.item()

    def _ece(self):
        """Estimated Calibration Error
        """
        cali_y, cali_yhat = calibration_curve(self.y, self.y_hat, n_bins=10)
        return float(np.abs(cali_y - cali_yhat).mean())

    def compute(self, data, metrics, **kws):
        self._check_metrics(metrics)
        self._pre_compute(data)
        res_metrics = dict()
        for m in metrics:
            res_metrics[m] = self.valid_functions[m]()
        return res_metrics
