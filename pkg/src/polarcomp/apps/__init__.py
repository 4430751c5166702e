"""End-to-end applications built on the encoder, decoder and simulator."""

from .blackbox import (BlackBoxProblem, coded_blackbox_grad, es_grad, finite_diff_grad,
                       l1_problem, run_l1_comparison)
from .gd import Diverged, GDState, coded_gd_least_squares, gd_least_squares, power_lambda_max
from .matmul2d import coded_matmul_2d

__all__ = [
    "BlackBoxProblem", "Diverged", "GDState", "coded_blackbox_grad", "coded_gd_least_squares",
    "coded_matmul_2d", "es_grad", "finite_diff_grad", "gd_least_squares", "l1_problem",
    "power_lambda_max", "run_l1_comparison",
]
