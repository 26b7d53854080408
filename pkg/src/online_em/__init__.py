"""Online EM for exponential-family latent-data models."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DegenerateComponentError,
    DimensionError,
    DomainError,
    InsufficientDataError,
    ModelSpec,
    ParamVector,
    StatVector,
    StepSchedule,
    blend_stats,
    schedule_gamma,
)
from .estimators import (  # noqa: E402
    RunResult,
    polyak_ruppert_average,
    run_batch_em,
    run_online_em,
    run_online_em_batch,
    run_titterington_poisson,
)
from .poisson import PoissonMixtureParams, poisson_mixture_model  # noqa: E402
from .regmix import RegMixParams, regmix_model  # noqa: E402
from .simgen import SeededStream  # noqa: E402
