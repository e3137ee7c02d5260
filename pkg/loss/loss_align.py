"""
Alignment losses between the behavioral space (CDM parameters) and the
semantic space (text embeddings).

- behavioral contrast: project semantic rows into the behavioral space and
  contrast each behavioral embedding against all projected rows (global) and
  against its semantic top-k neighbors (local).
- semantic reconstruction: mask behavioral embeddings by interaction
  frequency, project them into the semantic space and contrast them against
  the semantic table.
"""
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import torch
import torch.nn.functional as F

from utils.errors import ConfigError, ContractError, ShapeError
from utils.func import fetch_kws


@dataclass
class AlignmentConfig:
    alpha: float = 0.04
    beta: float = 0.015
    lam: float = 0.2
    tau: float = 0.2
    topk: int = 20
    mask_min: float = 0.1
    mask_max: float = 0.5
    mask_strategy: str = 'dynamic'
    mask_const: float = 0.3
    proj_hidden: int = 512
    max_negatives: int = 8192

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}.")
        if not 0 <= self.mask_min <= self.mask_max < 1:
            raise ConfigError(f"Expected 0 <= mask_min <= mask_max < 1, got ({self.mask_min}, {self.mask_max}).")
        if self.topk < 1:
            raise ConfigError(f"topk must be >= 1, got {self.topk}.")
        for name in ['alpha', 'beta', 'lam']:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}.")
        if self.mask_strategy not in ['dynamic', 'constant']:
            raise ConfigError(f"mask_strategy must be `dynamic` or `constant`, got {self.mask_strategy}.")
        if not 0 <= self.mask_const < 1:
            raise ConfigError(f"mask_const must be in [0, 1), got {self.mask_const}.")
        if self.max_negatives < 1:
            raise ConfigError(f"max_negatives must be >= 1, got {self.max_negatives}.")

    @classmethod
    def from_cfg(cls, cfg):
        kws = fetch_kws(cfg, prefix='align')
        if 'lambda' in kws:
            kws['lam'] = kws.pop('lambda')
        valid = set(cls.__dataclass_fields__.keys())
        return cls(**{k: v for k, v in kws.items() if k in valid})


#############################################
#                 InfoNCE
#############################################
def match_positive_index(anchor_ids, candidate_ids) -> torch.Tensor:
    """Position of every anchor id among the candidate ids."""
    pos = {c: i for i, c in enumerate(candidate_ids)}
    missing = [a for a in anchor_ids if a not in pos]
    if len(missing) > 0:
        raise ContractError(f"{len(missing)} anchor(s) have no positive among the candidates, e.g. {missing[:3]}.")
    return torch.tensor([pos[a] for a in anchor_ids], dtype=torch.long)

def info_nce(anchors: torch.Tensor, candidates: torch.Tensor, positive_index, tau: float) -> torch.Tensor:
    r"""Mean InfoNCE over anchors, with the positive included in the denominator.

    Args:
        anchors: [N, d], L2-normalized.
        candidates: [M, d] shared by all anchors, or [N, M, d] per anchor; L2-normalized.
        positive_index: [N] position of each anchor's positive in its candidate rows.
        tau (float): temperature.
    """
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}.")
    positive_index = torch.as_tensor(positive_index, dtype=torch.long).reshape(-1)
    N = anchors.shape[0]
    if positive_index.shape[0] != N:
        raise ShapeError("one positive index is needed per anchor", anchors.shape, positive_index.shape)
    if candidates.dim() == 2:
        if candidates.shape[-1] != anchors.shape[-1]:
            raise ShapeError("anchors and candidates differ in dimension", anchors.shape, candidates.shape)
        logits = anchors @ candidates.t() / tau  # [N, M]
    elif candidates.dim() == 3:
        if candidates.shape[0] != N or candidates.shape[-1] != anchors.shape[-1]:
            raise ShapeError("per-anchor candidates do not match anchors", anchors.shape, candidates.shape)
        logits = torch.einsum('nd,nmd->nm', anchors, candidates) / tau
    else:
        raise ShapeError("candidates must be 2-D or 3-D", candidates.shape, None)
    M = logits.shape[1]
    if bool(((positive_index < 0) | (positive_index >= M)).any()):
        raise ContractError(f"positive index out of range for {M} candidates.")
    pos_logits = logits.gather(1, positive_index.unsqueeze(1)).squeeze(1)
    return (torch.logsumexp(logits, dim=1) - pos_logits).mean()


#############################################
#             Dynamic masking
#############################################
def mask_ratio(freq, freq_max, cfg: AlignmentConfig, dim: Optional[int] = None):
    r"""Frequency-dependent mask ratio.

    ratio = r_min + (r_max - r_min) * ln(1 + freq) / ln(1 + freq_max); 0 for 1-d
    embeddings; r_min for every entity when freq_max = 0.
    """
    freq_arr = np.asarray(freq, dtype=np.float64)
    scalar = freq_arr.ndim == 0
    if freq_max < 0 or bool((freq_arr < 0).any()):
        raise ContractError("Frequencies must be non-negative.")
    if bool((freq_arr > freq_max).any()):
        raise ContractError(f"A frequency exceeds freq_max={freq_max}.")

    if dim is not None and dim <= 1:
        ratio = np.zeros_like(freq_arr)
    elif cfg.mask_strategy == 'constant':
        ratio = np.full_like(freq_arr, cfg.mask_const)
    elif freq_max == 0:
        ratio = np.full_like(freq_arr, cfg.mask_min)
    else:
        ratio = cfg.mask_min + (cfg.mask_max - cfg.mask_min) * np.log1p(freq_arr) / math.log1p(freq_max)
    return float(ratio) if scalar else ratio

def num_masked(dim: int, ratio: float) -> int:
    # at least one coordinate survives
    return min(int(math.floor(dim * ratio + 1e-9)), dim - 1)

def mask_embedding(c: torch.Tensor, ratio: Union[float, np.ndarray], generator: Optional[torch.Generator] = None,
    return_mask: bool = False):
    r"""Zero floor(d * ratio) coordinates chosen uniformly without replacement.

    Args:
        c: [d] or [N, d].
        ratio: a fraction in [0, 1), or one per row.
        generator: seeded torch generator.
    """
    single = c.dim() == 1
    rows = c.unsqueeze(0) if single else c
    N, d = rows.shape
    ratios = np.broadcast_to(np.asarray(ratio, dtype=np.float64), (N,))
    if bool(((ratios < 0) | (ratios >= 1)).any()):
        raise ContractError("Mask ratios must be in [0, 1).")

    mask = torch.ones_like(rows)
    for i in range(N):
        n_mask = num_masked(d, float(ratios[i]))
        if n_mask > 0:
            drop = torch.randperm(d, generator=generator)[:n_mask]
            mask[i, drop] = 0.0
    out = rows * mask
    out = out.squeeze(0) if single else out
    if return_mask:
        return out, (mask.squeeze(0) if single else mask)
    return out


#############################################
#       Candidate selection helpers
#############################################
def _candidate_rows(n: int, batch_idx: torch.Tensor, max_negatives: int, generator=None) -> torch.Tensor:
    """All rows, or a uniform subsample of `max_negatives` rows plus the batch positives."""
    if n <= max_negatives:
        return torch.arange(n)
    sampled = torch.randperm(n, generator=generator)[:max_negatives]
    return torch.unique(torch.cat([sampled, batch_idx.cpu()]))

def _check_inputs(kind, table, proj, c_batch, batch_idx):
    if table.kind != kind:
        raise ContractError(f"Entity kind mismatch: behavioral `{kind}` vs semantic table `{table.kind}`.")
    if c_batch.shape[0] != batch_idx.shape[0]:
        raise ShapeError("one entity index is needed per behavioral row", c_batch.shape, batch_idx.shape)


#############################################
#         Alignment losses
#############################################
def behavioral_alignment_loss(c_batch: torch.Tensor, batch_idx: torch.Tensor, table, proj, index,
    cfg: AlignmentConfig, kind: str, generator: Optional[torch.Generator] = None):
    r"""Global and local contrast in the behavioral space.

    Args:
        c_batch: [B, d_beh] behavioral embeddings of the batch entities.
        batch_idx: [B] dense ids of those entities (unique).
        table (EmbeddingTable): semantic rows of the same kind.
        proj (ProjectionNet): semantic -> behavioral.
        index (NeighborIndex): semantic top-k neighbors of the same kind.

    Returns:
        (L_global, L_local)
    """
    _check_inputs(kind, table, proj, c_batch, batch_idx)
    if index.kind != kind:
        raise ContractError(f"Entity kind mismatch: behavioral `{kind}` vs neighbor index `{index.kind}`.")
    if proj.in_dim != table.dim or proj.out_dim != c_batch.shape[-1]:
        raise ShapeError("projection does not bridge semantic -> behavioral", (proj.in_dim, proj.out_dim),
            (table.dim, c_batch.shape[-1]))
    L = table.matrix.to(c_batch.device)
    n = L.shape[0]
    cand = _candidate_rows(n, batch_idx, cfg.max_negatives, generator)
    neigh = torch.as_tensor(index.of(batch_idx.cpu().numpy()), dtype=torch.long)  # [B, k]

    # project only the rows in use
    needed = torch.unique(torch.cat([cand, batch_idx.cpu(), neigh.reshape(-1)]))
    where = torch.full((n,), -1, dtype=torch.long)
    where[needed] = torch.arange(needed.shape[0])
    l_proj = proj(L[needed])  # [U, d_beh], normalized

    anchors = F.normalize(c_batch, dim=-1)
    pos_global = match_positive_index(batch_idx.tolist(), cand.tolist())
    loss_global = info_nce(anchors, l_proj[where[cand]], pos_global, cfg.tau)

    local_rows = torch.cat([batch_idx.cpu().unsqueeze(1), neigh], dim=1)  # positive first
    local_cands = l_proj[where[local_rows]]  # [B, 1+k, d_beh]
    pos_local = torch.zeros(c_batch.shape[0], dtype=torch.long)
    loss_local = info_nce(anchors, local_cands, pos_local, cfg.tau)
    return loss_global, loss_local

def semantic_alignment_loss(c_batch: torch.Tensor, batch_idx: torch.Tensor, table, proj, counts,
    cfg: AlignmentConfig, kind: str, generator: Optional[torch.Generator] = None):
    r"""Masked reconstruction of the semantic row from the behavioral embedding.

    Args:
        counts (np.ndarray): training interaction counts of every entity of this kind.
        proj (ProjectionNet): behavioral -> semantic.

    Returns:
        L_recon
    """
    _check_inputs(kind, table, proj, c_batch, batch_idx)
    if proj.in_dim != c_batch.shape[-1] or proj.out_dim != table.dim:
        raise ShapeError("projection does not bridge behavioral -> semantic", (proj.in_dim, proj.out_dim),
            (c_batch.shape[-1], table.dim))
    counts = np.asarray(counts)
    ratios = mask_ratio(counts[batch_idx.cpu().numpy()], int(counts.max()) if counts.size else 0, cfg,
        dim=c_batch.shape[-1])
    c_masked = mask_embedding(c_batch, ratios, generator=generator)
    anchors = proj(c_masked)  # normalized

    L = table.matrix.to(c_batch.device)
    cand = _candidate_rows(L.shape[0], batch_idx, cfg.max_negatives, generator)
    pos = match_positive_index(batch_idx.tolist(), cand.tolist())
    return info_nce(anchors, F.normalize(L[cand], dim=-1), pos, cfg.tau)
