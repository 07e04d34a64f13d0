"""Power-transformed Gaussian-smoothing homotopy optimization toolkit.

A library plus CLI benchmark harness for stochastic first-order
optimization with a progressively increasing power transform and a
decaying smoothing radius, together with classic baselines and benchmark
problems (phase retrieval, two-layer ReLU teacher-student, a 1-D
two-peak landscape).
"""

from .core import RngStream, ScheduleConfig, SurrogateParams
from .optimizers import (PowerHP, PowerHPConfig, make_optimizer,
                         powerhp_grad_estimate, run)
from .problems import (Landscape1DProblem, PhaseRetrievalProblem,
                       TwoLayerProblem, pr_generate, pr_metric, tl_generate)

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "ScheduleConfig",
    "SurrogateParams",
    "PowerHP",
    "PowerHPConfig",
    "make_optimizer",
    "powerhp_grad_estimate",
    "run",
    "Landscape1DProblem",
    "PhaseRetrievalProblem",
    "TwoLayerProblem",
    "pr_generate",
    "pr_metric",
    "tl_generate",
    "__version__",
]
