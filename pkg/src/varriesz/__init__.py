"""Variable-order Riesz potentials, Hausdorff content and Sobolev-Poincare checks on grids."""

from .fields import (
    ExponentField,
    Grid,
    ScalarField,
    gradient_magnitude,
    integrate,
    log_holder_constant,
    make_grid,
    mean_over_ball,
    sample_field,
)

__version__ = "0.1.0"
