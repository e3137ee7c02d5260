import torch

from utils.errors import ShapeError


PROB_EPS = 1e-7


def bce_loss(pred: torch.Tensor, label: torch.Tensor, reduction: str = 'sum') -> torch.Tensor:
    r"""Binary cross entropy on probabilities, summed over the batch by default.

    Predictions are clamped into [1e-7, 1 - 1e-7] before the log.
    """
    pred = pred.reshape(-1)
    label = label.reshape(-1).to(pred.dtype)
    if pred.shape != label.shape:
        raise ShapeError("predictions and labels differ in length", pred.shape, label.shape)
    y = pred.clamp(PROB_EPS, 1 - PROB_EPS)
    loss = -(label * torch.log(y) + (1 - label) * torch.log(1 - y))
    if reduction == 'sum':
        return loss.sum()
    elif reduction == 'mean':
        return loss.mean()
    return loss


class BCELoss(torch.nn.Module):
    def __init__(self, reduction='sum'):
        super(BCELoss, self).__init__()
        assert reduction in ['sum', 'mean', 'none']
        self.reduction = reduction

    def forward(self, pred, label):
        return bce_loss(pred, label, reduction=self.reduction)
