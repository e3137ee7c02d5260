import torch
import torch.nn as nn

from utils.errors import ConfigError
from utils.func import parse_str_dims
from .cdm import IRT, MIRT, DINA, NCD, CDM_KINDS
from .layers import ProjectionNet


##########################################
# Functions for loading models
##########################################
def load_model(arch: str, num_students: int, num_exercises: int, num_concepts: int, q_matrix=None, **kws):
    r"""Build a cognitive diagnosis model in float64 with initialized (and projected) parameters.

    Args:
        arch (string): one of IRT, MIRT, DINA, NCD (case-insensitive).
        kws: model options, e.g. `latent_dim` for MIRT or `hidden_dims` for NCD.
    """
    arch = arch.upper()
    if arch == 'IRT':
        model = IRT(num_students, num_exercises, num_concepts)
    elif arch == 'MIRT':
        model = MIRT(num_students, num_exercises, num_concepts, latent_dim=int(kws.get('latent_dim', 16)))
    elif arch == 'DINA':
        model = DINA(num_students, num_exercises, num_concepts, q_matrix=q_matrix,
            init_slip_guess=float(kws.get('init_slip_guess', 0.2)))
    elif arch == 'NCD':
        hidden_dims = parse_str_dims(kws.get('hidden_dims', '512-256'))
        model = NCD(num_students, num_exercises, num_concepts, q_matrix=q_matrix, hidden_dims=hidden_dims)
    else:
        raise ConfigError("Model {} cannot be recognized; expected one of {}.".format(arch, CDM_KINDS))

    model = model.double()
    model.reset_parameters()
    return model

def load_projections(mode: str, dims_beh: dict, dim_sem: int, hidden_dim: int = 512):
    r"""Separate projection nets for students and exercises.

    mode 'beh' maps semantic -> behavioral; mode 'sem' maps behavioral -> semantic.
    """
    assert mode in ['beh', 'sem'], f"Projections are only used by alignment modes, got {mode}."
    projs = nn.ModuleDict()
    for kind in ['student', 'exercise']:
        if mode == 'beh':
            projs[kind] = ProjectionNet(dim_sem, dims_beh[kind], hidden_dim=hidden_dim, direction='sem2beh')
        else:
            projs[kind] = ProjectionNet(dims_beh[kind], dim_sem, hidden_dim=hidden_dim, direction='beh2sem')
    projs = projs.double()
    projs.apply(init_weights)
    return projs

def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


##########################################
# Model weight initialization functions
##########################################
@torch.no_grad()
def init_weights(m):
    if isinstance(m, nn.Linear):
        nn.init.xavier_uniform_(m.weight)
        if m.bias is not None:
            m.bias.data.zero_()
