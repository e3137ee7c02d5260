from .tape import Tape, Node, tape_eval, tape_grad
from .gradcheck import gradient_check, module_gradient_check, GradCheckReport, GradCheckEntry
