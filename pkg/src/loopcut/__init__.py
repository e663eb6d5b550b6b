"""Bond truncation for loopy tensor networks: zero-mode gauge fixing,
environment-assisted truncation, and a TRG engine for the 2D Ising model."""

__version__ = "0.1.0"

from .tensor import (DenseTensor, SvdResult, EigResult, LegError,
                     NumericalError, contract, merge_legs, split_leg, svd,
                     eig_hermitian, eig_general, pinv)
from .bondmetric import (BondEnvironment, EatSplit, ErrorMeasure,
                         build_metric, diag_metric, loopiness, eat_split,
                         measure_error, state_overlap, fidelity_mismatch,
                         gauge_transform, product_env)
from .eatgauge import GaugePair, eat_gauge_fix, eat_truncate
from .zmt import (ZeroModeCandidate, TruncationStep, TruncationReport,
                  select_mode, step_linear, step_general, step_product,
                  refine_w, improve_mode, truncate_to)
from .fixtures import toy_pair, virtual_loop_network, random_env
