from .graph import Graph, Node, backward, forward
from .gradcheck import GradCheckReport, grad_check, op_suite
from .ops import Op, mmd_squared, median_bandwidth, ops
from .optim import Adam, Optimizer, Sgd, make_optimizer
from .tensor import Tensor
