"""
Cognitive diagnosis models: IRT, MIRT, DINA and NCD.

Each model exposes the per-entity behavioral embeddings used for alignment
through `entity_embedding(kind, idx)`.
"""
import math
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from utils.errors import ContractError, ShapeError
from .layers import PosLinear, Pos_MLP, project_nonneg


CDM_KINDS = ['IRT', 'MIRT', 'DINA', 'NCD']


def _t(x):
    return x if isinstance(x, torch.Tensor) else torch.tensor(x, dtype=torch.float64)


#############################################
#      Interaction functions (pure)
#############################################
def predict_irt(theta, a, b):
    """p = sigmoid(a * (theta - b))"""
    theta, a, b = _t(theta), _t(a), _t(b)
    return torch.sigmoid(a * (theta - b))

def predict_mirt(theta, a, b):
    """p = sigmoid(a . theta - b) over the last dimension."""
    theta, a, b = _t(theta), _t(a), _t(b)
    if theta.shape[-1] != a.shape[-1]:
        raise ShapeError("theta and a differ in latent dimension", theta.shape, a.shape)
    return torch.sigmoid((a * theta).sum(-1) - b)

def predict_dina(mastery_logits, s_logit, g_logit, required):
    r"""Relaxed DINA: p = g * (1 - eta) + (1 - s) * eta.

    eta is the product of sigmoid(mastery_logits) over the required concepts,
    evaluated in log space.

    Args:
        required: binary mask with the shape of `mastery_logits`.
    """
    m, s_logit, g_logit, q = _t(mastery_logits), _t(s_logit), _t(g_logit), _t(required)
    if m.shape != q.shape:
        raise ShapeError("mastery and required mask differ in shape", m.shape, q.shape)
    if bool((q.sum(-1) <= 0).any()):
        raise ContractError("DINA needs a non-empty required concept set.")
    eta = torch.exp((q * F.logsigmoid(m)).sum(-1))
    s, g = torch.sigmoid(s_logit), torch.sigmoid(g_logit)
    return g * (1 - eta) + (1 - s) * eta

def ncd_input(student_row, difficulty_row, disc_logit, q_row):
    """x = q_row * (sigmoid(student_row) - sigmoid(difficulty_row)) * sigmoid(disc_logit)"""
    student_row, difficulty_row, disc_logit, q_row = _t(student_row), _t(difficulty_row), _t(disc_logit), _t(q_row)
    if not (student_row.shape == difficulty_row.shape == q_row.shape):
        raise ShapeError("NCD rows differ in shape", student_row.shape,
            difficulty_row.shape if student_row.shape != difficulty_row.shape else q_row.shape)
    if disc_logit.dim() == student_row.dim() - 1:
        disc_logit = disc_logit.unsqueeze(-1)
    return q_row * (torch.sigmoid(student_row) - torch.sigmoid(difficulty_row)) * torch.sigmoid(disc_logit)

def predict_ncd(student_row, difficulty_row, disc_logit, q_row, layers: nn.Module):
    r"""NCD interaction with a monotone prediction net.

    Args:
        layers (nn.Module): PosLinear layers with sigmoid activations in between,
            input width = number of concepts, output width = 1.
    """
    x = ncd_input(student_row, difficulty_row, disc_logit, q_row)
    first = next(m for m in layers.modules() if isinstance(m, PosLinear))
    if x.shape[-1] != first.in_features:
        raise ShapeError("NCD input width differs from the prediction net", x.shape, (first.in_features,))
    return torch.sigmoid(layers(x)).squeeze(-1)


#############################################
#               Models
#############################################
class CDMBase(nn.Module):
    """Shared plumbing: behavioral embeddings, initialization, projection."""
    kind = None

    def __init__(self, num_students, num_exercises, num_concepts):
        super(CDMBase, self).__init__()
        self.num_students = num_students
        self.num_exercises = num_exercises
        self.num_concepts = num_concepts

    def forward(self, stu_idx, exer_idx):
        raise NotImplementedError

    def student_embedding(self, idx=None):
        raise NotImplementedError

    def exercise_embedding(self, idx=None):
        raise NotImplementedError

    def entity_embedding(self, kind, idx=None):
        if kind == 'student':
            return self.student_embedding(idx)
        elif kind == 'exercise':
            return self.exercise_embedding(idx)
        raise ContractError(f"Unknown entity kind `{kind}`.")

    def behavioral_dims(self):
        with torch.no_grad():
            idx = torch.zeros(1, dtype=torch.long)
            return {
                'student': int(self.student_embedding(idx).shape[-1]),
                'exercise': int(self.exercise_embedding(idx).shape[-1]),
            }

    def nonneg_layers(self):
        return []

    def project_nonneg(self):
        project_nonneg(self.nonneg_layers())

    @torch.no_grad()
    def reset_parameters(self):
        for m in self.modules():
            if isinstance(m, nn.Embedding):
                nn.init.uniform_(m.weight, -0.01, 0.01)
            elif isinstance(m, PosLinear):
                # non-negative from the start, with centred pre-activations
                m.reset_parameters()
            elif isinstance(m, nn.Linear):
                nn.init.xavier_uniform_(m.weight)
                if m.bias is not None:
                    m.bias.zero_()
        self.project_nonneg()

    @staticmethod
    def _select(emb: nn.Embedding, idx):
        return emb.weight if idx is None else emb(idx)


class IRT(CDMBase):
    kind = 'IRT'

    def __init__(self, num_students, num_exercises, num_concepts=None, **kws):
        super(IRT, self).__init__(num_students, num_exercises, num_concepts)
        self.theta = nn.Embedding(num_students, 1)
        self.a = nn.Embedding(num_exercises, 1)
        self.b = nn.Embedding(num_exercises, 1)

    def forward(self, stu_idx, exer_idx):
        return predict_irt(self.theta(stu_idx), self.a(exer_idx), self.b(exer_idx)).squeeze(-1)

    def student_embedding(self, idx=None):
        return self._select(self.theta, idx)

    def exercise_embedding(self, idx=None):
        return torch.cat([self._select(self.a, idx), self._select(self.b, idx)], dim=-1)


class MIRT(CDMBase):
    kind = 'MIRT'

    def __init__(self, num_students, num_exercises, num_concepts=None, latent_dim=16, **kws):
        super(MIRT, self).__init__(num_students, num_exercises, num_concepts)
        self.latent_dim = latent_dim
        self.theta = nn.Embedding(num_students, latent_dim)
        self.a = nn.Embedding(num_exercises, latent_dim)
        self.b = nn.Embedding(num_exercises, 1)

    def forward(self, stu_idx, exer_idx):
        return predict_mirt(self.theta(stu_idx), self.a(exer_idx), self.b(exer_idx).squeeze(-1))

    def student_embedding(self, idx=None):
        return self._select(self.theta, idx)

    def exercise_embedding(self, idx=None):
        return torch.cat([self._select(self.a, idx), self._select(self.b, idx)], dim=-1)


class DINA(CDMBase):
    kind = 'DINA'

    def __init__(self, num_students, num_exercises, num_concepts, q_matrix=None, init_slip_guess=0.2, **kws):
        super(DINA, self).__init__(num_students, num_exercises, num_concepts)
        assert q_matrix is not None, "DINA needs a Q-matrix."
        self.register_buffer('q_matrix', torch.as_tensor(q_matrix, dtype=torch.float64))
        self.init_slip_guess = init_slip_guess
        self.mastery = nn.Embedding(num_students, num_concepts)
        self.slip = nn.Embedding(num_exercises, 1)
        self.guess = nn.Embedding(num_exercises, 1)

    @torch.no_grad()
    def reset_parameters(self):
        super(DINA, self).reset_parameters()
        # slip/guess start near `init_slip_guess` instead of 0.5, where the mastery gradient vanishes
        logit = math.log(self.init_slip_guess / (1 - self.init_slip_guess))
        self.slip.weight.add_(logit)
        self.guess.weight.add_(logit)

    def forward(self, stu_idx, exer_idx):
        return predict_dina(self.mastery(stu_idx), self.slip(exer_idx).squeeze(-1),
            self.guess(exer_idx).squeeze(-1), self.q_matrix[exer_idx])

    def student_embedding(self, idx=None):
        return self._select(self.mastery, idx)

    def exercise_embedding(self, idx=None):
        return torch.cat([self._select(self.slip, idx), self._select(self.guess, idx)], dim=-1)


class NCD(CDMBase):
    kind = 'NCD'

    def __init__(self, num_students, num_exercises, num_concepts, q_matrix=None, hidden_dims=(512, 256),
        activation='sigmoid', **kws):
        super(NCD, self).__init__(num_students, num_exercises, num_concepts)
        assert q_matrix is not None, "NCD needs a Q-matrix."
        self.register_buffer('q_matrix', torch.as_tensor(q_matrix, dtype=torch.float64))
        self.student_emb = nn.Embedding(num_students, num_concepts)
        self.k_difficulty = nn.Embedding(num_exercises, num_concepts)
        self.e_discrimination = nn.Embedding(num_exercises, 1)
        self.pred_net = Pos_MLP([num_concepts] + list(hidden_dims) + [1], activation=activation)

    def forward(self, stu_idx, exer_idx):
        return predict_ncd(self.student_emb(stu_idx), self.k_difficulty(exer_idx),
            self.e_discrimination(exer_idx), self.q_matrix[exer_idx], self.pred_net)

    def nonneg_layers(self):
        return [self.pred_net]

    def student_embedding(self, idx=None):
        return self._select(self.student_emb, idx)

    def exercise_embedding(self, idx=None):
        return torch.cat([self._select(self.k_difficulty, idx), self._select(self.e_discrimination, idx)], dim=-1)
