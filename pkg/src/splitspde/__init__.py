"""Spectral splitting schemes for stochastic Schrodinger-type evolution equations."""

__version__ = "0.1.0"

from .clocks import ClockSchedule, increment, schedule_distance  # noqa: E402
from .noise import BrownianPath, coarsen, generate, value_at  # noqa: E402
from .operators import (  # noqa: E402
    AssumptionReport,
    DriftOperator,
    Model,
    NoiseOperator,
    apply_drift,
    apply_noise,
    check_assumptions,
    ito_correction,
    to_ito,
)
from .presets import preset  # noqa: E402
from .solvers import (  # noqa: E402
    Trajectory,
    det_substep,
    exact_oracle,
    lie_split_step,
    reference_solve,
    run_splitting,
    stoch_substep,
    strang_split_step,
)
from .spectral import (  # noqa: E402
    CoefficientField,
    SpectralField,
    TorusGrid,
    derivative,
    multiply,
    sample,
    sobolev_inner,
    sobolev_norm,
)
