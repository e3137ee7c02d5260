from .loss_cdm import bce_loss, BCELoss
from .loss_align import AlignmentConfig, info_nce, match_positive_index, mask_ratio, mask_embedding
from .loss_align import behavioral_alignment_loss, semantic_alignment_loss
from .utils import load_loss, ALIGN_MODES
