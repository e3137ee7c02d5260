from .cdm import IRT, MIRT, DINA, NCD, CDM_KINDS
from .cdm import predict_irt, predict_mirt, predict_dina, predict_ncd
from .layers import PosLinear, ProjectionNet, project_nonneg
from .utils import load_model, load_projections
