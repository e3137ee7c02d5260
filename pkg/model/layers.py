from typing import Iterable
import torch
import torch.nn as nn
import torch.nn.functional as F


class PosLinear(nn.Linear):
    r"""Linear layer whose weights are kept element-wise non-negative by `project_`.

    Weights start as the magnitudes of a Xavier draw, so `project_` leaves them
    unchanged, and the bias starts at -input_mean * sum(w) so that every
    pre-activation is centred at zero for inputs around `input_mean`.

    Args:
        input_mean (float): typical input value, e.g. 0.5 after a sigmoid.
    """
    def __init__(self, in_features, out_features, bias=True, input_mean=0.0):
        super(PosLinear, self).__init__(in_features, out_features, bias=bias)
        self.input_mean = input_mean
        self.center_bias_()

    @torch.no_grad()
    def reset_parameters(self):
        nn.init.xavier_uniform_(self.weight)
        self.weight.abs_()
        self.center_bias_()

    @torch.no_grad()
    def center_bias_(self):
        if self.bias is not None:
            self.bias.copy_(-getattr(self, 'input_mean', 0.0) * self.weight.sum(dim=1))
        return self

    @torch.no_grad()
    def project_(self):
        self.weight.clamp_(min=0.0)
        return self


def project_nonneg(layers: Iterable[nn.Module]):
    """Clamp the weights of every PosLinear in `layers` to >= 0. Biases are untouched."""
    for layer in layers:
        for m in layer.modules():
            if isinstance(m, PosLinear):
                m.project_()
    return layers


def Pos_MLP(dims, activation='sigmoid'):
    r"""A monotone prediction net: PosLinear layers separated by `activation`.

    Args:
        dims (list): [dim_in, hidden_1, ..., dim_out].
    """
    assert len(dims) >= 2, "Pos_MLP needs at least input and output dims."
    act = {'sigmoid': nn.Sigmoid, 'tanh': nn.Tanh}[activation]
    act_mean = {'sigmoid': 0.5, 'tanh': 0.0}[activation]
    layers = []
    for i in range(len(dims) - 1):
        # the first layer reads the NCD interaction vector, centred at zero
        layers.append(PosLinear(dims[i], dims[i+1], input_mean=0.0 if i == 0 else act_mean))
        if i < len(dims) - 2:
            layers.append(act())
    return nn.Sequential(*layers)


class ProjectionNet(nn.Module):
    r"""One hidden layer MLP bridging the behavioral and semantic spaces.

    Args:
        in_dim (int): input dimension.
        out_dim (int): output dimension.
        hidden_dim (int): width of the hidden layer.
        direction (string): 'sem2beh' or 'beh2sem'.
        normalize (bool): if L2-normalize the output rows.
    """
    def __init__(self, in_dim, out_dim, hidden_dim=512, direction='sem2beh', normalize=True):
        super(ProjectionNet, self).__init__()
        assert direction in ['sem2beh', 'beh2sem'], f"Unknown projection direction {direction}."
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.direction = direction
        self.normalize = normalize
        self.projecter = nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, out_dim),
        )

    def forward(self, x):
        # x = [N, in_dim]
        x = self.projecter(x)
        if self.normalize:
            x = F.normalize(x, dim=-1)
        return x
