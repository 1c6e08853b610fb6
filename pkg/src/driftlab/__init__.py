"""driftlab: stochastic-interpolant generative modeling on desk-scale toys.

The package connects data to noise through an interpolation path
``x_t = alpha(t) x_star + sigma(t) eps`` and exposes every layer of the
pipeline as a small, independently testable unit:

* :mod:`driftlab.schedule` — interpolation schedules (linear, gvp, sbdm-vp)
  and diffusion coefficients for the stochastic sampler;
* :mod:`driftlab.field` — velocity/score fields, exact Gaussian-mixture
  fields, conversions between the two parameterizations, guidance;
* :mod:`driftlab.sampler` — deterministic Heun integration of the
  probability-flow equation and Euler–Maruyama integration of the
  noise-injecting dynamics, with exact function-evaluation accounting;
* :mod:`driftlab.learner` — a small MLP field, the three training
  objectives, the training loop, per-time loss profiles, checkpoints;
* :mod:`driftlab.toybox` — preset mixtures, exact draws, sample files;
* :mod:`driftlab.metrics` — energy distance, KS, mode occupancy, path
  length, and the KL bound on stochastic-sampling error;
* :mod:`driftlab.cli` — the ``driftlab`` command.
"""

from .errors import (
    ConfigError,
    DomainError,
    DriftlabError,
    MissingProfileError,
    NonFiniteError,
    SingularityError,
    UnconditionalModelError,
)
from .field import (
    AnalyticMixtureField,
    Conditioning,
    FieldModel,
    GaussianMixture,
    Prediction,
    gmm_class_posterior,
    gmm_conditional_score,
    gmm_conditional_velocity,
    gmm_marginal_score,
    gmm_marginal_velocity,
    gmm_posterior_means,
    guided_field,
    interpolant_derivative,
    interpolate,
    mixture_log_density,
    score_from_velocity,
    velocity_from_score,
)
from .learner import (
    LossProfile,
    MLPField,
    TrainConfig,
    TrainObjective,
    TrainResult,
    default_time_window,
    estimate_loss_profile,
    load_checkpoint,
    loss_score,
    loss_score_weighted,
    loss_velocity,
    save_checkpoint,
    time_features,
    train,
)
from .metrics import (
    MetricReport,
    energy_distance,
    energy_distance_permutation_test,
    kl_bound,
    kl_cost_integrand,
    kl_cost_minimizer,
    kl_cost_minimum,
    kl_integrand,
    ks_per_axis,
    mode_occupancy,
    path_length,
)
from .sampler import (
    SamplerKind,
    SamplerResult,
    SamplerSpec,
    default_window,
    euler_maruyama_sample,
    heun_sample,
    time_grid,
)
from .schedule import (
    GVPSchedule,
    InterpolantSchedule,
    LinearSchedule,
    SBDMVPSchedule,
    ConstantCoefficient,
    DiffusionCoefficient,
    KLCoefficient,
    KLEtaCoefficient,
    SigmaCoefficient,
    SineSquaredCoefficient,
    ZeroCoefficient,
    make_schedule,
    parse_coefficient,
    schedule_from_config,
)
from .toybox import (
    PRESET_NAMES,
    ToyDataset,
    draw,
    get_preset,
    read_samples,
    write_samples,
)

__version__ = "0.1.0"
