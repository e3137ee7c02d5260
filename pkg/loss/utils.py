from functools import partial

from utils.errors import ConfigError
from .loss_cdm import BCELoss
from .loss_align import AlignmentConfig, behavioral_alignment_loss, semantic_alignment_loss


ALIGN_MODES = ['none', 'beh', 'sem']


def load_loss(align_mode: str, align_cfg: AlignmentConfig):
    r"""Loss terms and their weights for an alignment mode.

    Returns:
        (loss_fn, loss_weight): dicts keyed by term name. `BCE` is always present;
        mode `beh` adds `Beh` (returning the global and local terms), mode `sem` adds `Sem`.
    """
    if align_mode not in ALIGN_MODES:
        raise ConfigError(f"Unknown alignment mode {align_mode}; expected one of {ALIGN_MODES}.")
    loss_fn = {'BCE': BCELoss(reduction='sum')}
    loss_weight = {'BCE': 1.0}
    if align_mode == 'beh':
        loss_fn['Beh'] = partial(behavioral_alignment_loss, cfg=align_cfg)
        loss_weight['Global'] = align_cfg.alpha
        loss_weight['Local'] = align_cfg.beta
    elif align_mode == 'sem':
        loss_fn['Sem'] = partial(semantic_alignment_loss, cfg=align_cfg)
        loss_weight['Recon'] = align_cfg.lam
    for name, w in loss_weight.items():
        print("[setup] loss {}: weight = {}.".format(name, w))
    return loss_fn, loss_weight
