"""Time grids and the two integrators: a deterministic second-order Heun
scheme for the probability-flow ODE and a first-order Euler-Maruyama scheme
for the reverse-time SDE with a tunable diffusion coefficient.

Time convention: ``t = 0`` is data and ``t = 1`` is noise, so sampling
integrates *down* a uniform descending grid from ``t_start`` to ``t_end``
(``t_start > t_end``, signed step ``dt < 0``).  The stochastic sampler's
update is

    x <- x + dt * (v(x, t) - w(t)/2 * s(x, t)) + sqrt(w(t)) * sqrt(|dt|) * xi

with independent standard-normal increments ``xi`` (the reverse-time Wiener
process enters only through i.i.d. increments), followed by one final
deterministic drift step — no noise — from ``t_end`` down to ``last_step_to``
when configured.  Any ``w(t) >= 0`` leaves the sampled marginals invariant;
``w = 0`` degenerates the update to a first-order Euler ODE step.

Both integrators start every trajectory from an independent standard-normal
draw at ``t_start`` and consume a dedicated random stream per trajectory
index, so results are bit-identical regardless of chunking or worker count
and stable under extension of the batch.

Function-evaluation (NFE) accounting per trajectory: Heun spends exactly
``2N`` model evaluations (no fused final correction), Euler-Maruyama spends
``N`` plus one for the final noiseless step; guidance with ``zeta`` outside
{0, 1} doubles each count (conditional + null evaluations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NonFiniteError
from .field import (
    FieldModel,
    Prediction,
    guided_field,
    score_from_velocity,
    velocity_from_score,
)
from .schedule import DiffusionCoefficient, InterpolantSchedule

__all__ = [
    "SamplerKind",
    "SamplerSpec",
    "SamplerResult",
    "time_grid",
    "default_window",
    "heun_sample",
    "euler_maruyama_sample",
    "DEFAULT_CHUNK",
]

import enum


class SamplerKind(str, enum.Enum):
    """Which integrator a :class:`SamplerSpec` drives."""

    HEUN_ODE = "heun"
    EULER_MARUYAMA_SDE = "em"


#: Trajectories are integrated in chunks of this many at a time by default.
DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class SamplerSpec:
    """Full description of one sampling run.

    ``t_start > t_end`` (integration runs from noise toward data);
    ``diffusion`` and ``last_step_to`` apply to the stochastic sampler only;
    ``guidance_zeta`` mixes conditional and null evaluations and requires a
    class label at sampling time.
    """

    kind: SamplerKind
    t_start: float
    t_end: float
    steps: int
    diffusion: DiffusionCoefficient | None = None
    last_step_to: float | None = None
    guidance_zeta: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SamplerKind(self.kind))
        for name in ("t_start", "t_end"):
            value = float(getattr(self, name))
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
            object.__setattr__(self, name, value)
        if not self.t_start > self.t_end:
            raise ConfigError(
                f"t_start ({self.t_start!r}) must exceed t_end ({self.t_end!r}); "
                f"sampling integrates from noise toward data"
            )
        steps = int(self.steps)
        if steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "steps", steps)
        if self.last_step_to is not None:
            final = float(self.last_step_to)
            if not 0.0 <= final <= self.t_end:
                raise ConfigError(
                    f"last_step_to must lie in [0, t_end], got {final!r}"
                )
            object.__setattr__(self, "last_step_to", final)
        if self.guidance_zeta is not None:
            zeta = float(self.guidance_zeta)
            if not math.isfinite(zeta) or zeta < 0.0:
                raise ConfigError(f"guidance_zeta must be >= 0, got {zeta!r}")
            object.__setattr__(self, "guidance_zeta", zeta)
        if self.kind is SamplerKind.HEUN_ODE:
            if self.diffusion is not None:
                raise ConfigError("the deterministic sampler takes no diffusion coefficient")
            if self.last_step_to is not None:
                raise ConfigError("the deterministic sampler takes no last_step_to")
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class SamplerResult:
    """Samples plus bookkeeping from one sampling run."""

    samples: np.ndarray
    #: Model function evaluations per trajectory.
    nfe: int
    #: The uniform time grid the integrator walked (length steps + 1).
    grid: np.ndarray


def time_grid(spec: SamplerSpec) -> np.ndarray:
    """Uniform descending grid ``t_i = t_start + i*(t_end - t_start)/steps``."""
    return np.linspace(spec.t_start, spec.t_end, spec.steps + 1)


def default_window(schedule: InterpolantSchedule | str, prediction: Prediction | str,
                   kind: SamplerKind | str) -> tuple[float, float, float | None]:
    """Recommended ``(t_start, t_end, last_step_to)`` per schedule/prediction/kind.

    The windows clip singular endpoints: velocity evaluation (or conversion
    from score) needs ``alpha > 0``, the sbdm-vp schedule is singular at
    ``t = 0``, and the stochastic sampler ends early at ``t = 0.04`` with a
    final noiseless drift step down to ``t = 0``.  ``last_step_to`` is
    ``None`` for the deterministic sampler.
    """
    name = schedule if isinstance(schedule, str) else schedule.name
    if name not in ("linear", "gvp", "sbdm-vp"):
        raise ConfigError(f"unknown schedule {name!r}")
    prediction = Prediction(prediction)
    kind = SamplerKind(kind)
    if kind is SamplerKind.HEUN_ODE:
        if name == "sbdm-vp":
            return (1.0, 1e-5, None)
        if prediction is Prediction.VELOCITY:
            return (1.0, 0.0, None)
        return (1.0 - 1e-5, 0.0, None)
    if name == "sbdm-vp" or prediction is Prediction.VELOCITY:
        return (1.0, 4e-2, 0.0)
    return (1.0 - 1e-3, 4e-2, 0.0)


class _CountingField:
    """Wraps a model into velocity/score closures with NFE accounting.

    One "evaluation" is one batched model call; guidance with zeta outside
    {0, 1} spends two per call (conditional + null).
    """

    def __init__(self, model: FieldModel, spec: SamplerSpec, y) -> None:
        if spec.guidance_zeta is not None:
            if y is None:
                raise ConfigError("guided sampling requires a class label y")
            if model.conditioning is None:
                raise ConfigError("guided sampling requires a conditional model")
        self.model = model
        self.schedule = model.schedule
        self.zeta = spec.guidance_zeta
        self.y = y
        self.calls = 0

    def _raw(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.zeta is not None:
            self.calls += 1 if self.zeta in (0.0, 1.0) else 2
            return guided_field(self.model, self.zeta, x, t, self.y)
        self.calls += 1
        return self.model.evaluate(x, t, self.y)

    def velocity(self, x: np.ndarray, t: float) -> np.ndarray:
        value = self._raw(x, t)
        if self.model.prediction is Prediction.SCORE:
            return velocity_from_score(self.schedule, value, x, t)
        return value

    def velocity_and_score(self, x: np.ndarray, t: float
                           ) -> tuple[np.ndarray, np.ndarray]:
        value = self._raw(x, t)
        if self.model.prediction is Prediction.SCORE:
            return velocity_from_score(self.schedule, value, x, t), value
        return value, score_from_velocity(self.schedule, value, x, t)


def _trajectory_stream(seed: int, index: int) -> np.random.Generator:
    """Dedicated random stream for one trajectory index.

    Built from the run seed with the trajectory index as spawn key, so
    streams never overlap, do not depend on chunking, and are stable under
    extending the batch.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def _chunk_noise(seed: int, lo: int, hi: int, rows: int, dim: int) -> np.ndarray:
    """Per-trajectory standard-normal draws for trajectories lo..hi-1.

    Row 0 is the initial state at t_start; remaining rows are the stochastic
    sampler's step increments.
    """
    out = np.empty((hi - lo, rows, dim))
    for index in range(lo, hi):
        out[index - lo] = _trajectory_stream(seed, index).standard_normal((rows, dim))
    return out


def _model_dimension(model: FieldModel) -> int:
    dim = getattr(model, "dimension", None)
    if dim is None:
        gmm = getattr(model, "gmm", None)
        dim = getattr(gmm, "dimension", None)
    if dim is None:
        raise ConfigError("model does not expose its data dimension")
    return int(dim)


def _check_finite(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("sampler state became non-finite", step=step)


def heun_sample(model: FieldModel, spec: SamplerSpec, n_samples: int,
                y=None, chunk_size: int | None = None) -> SamplerResult:
    """Integrate the probability-flow ODE with the explicit trapezoidal
    (Heun) scheme.

    Each step evaluates the velocity at the current point, takes a predictor
    Euler step, re-evaluates at the predicted point and the next time, and
    averages the two slopes — 2 evaluations per step, second-order accurate.
    Score models are converted to velocity pointwise, so the window must keep
    ``alpha(t) > 0``.
    """
    if spec.kind is not SamplerKind.HEUN_ODE:
        raise ConfigError(f"heun_sample requires a {SamplerKind.HEUN_ODE.value!r} spec")
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise DomainError(f"n_samples must be positive, got {n_samples}")
    dim = _model_dimension(model)
    grid = time_grid(spec)
    dt = (spec.t_end - spec.t_start) / spec.steps
    chunk = int(chunk_size) if chunk_size else DEFAULT_CHUNK
    outputs = []
    nfe_per_chunk = []
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        field = _CountingField(model, spec, y)
        x = _chunk_noise(spec.seed, lo, hi, 1, dim)[:, 0, :]
        for i in range(spec.steps):
            slope_here = field.velocity(x, float(grid[i]))
            predicted = x + dt * slope_here
            slope_next = field.velocity(predicted, float(grid[i + 1]))
            x = x + 0.5 * dt * (slope_here + slope_next)
            _check_finite(x, i)
        outputs.append(x)
        nfe_per_chunk.append(field.calls)
    assert len(set(nfe_per_chunk)) == 1
    return SamplerResult(np.concatenate(outputs, axis=0), nfe_per_chunk[0], grid)


def euler_maruyama_sample(model: FieldModel, spec: SamplerSpec, n_samples: int,
                          y=None, chunk_size: int | None = None) -> SamplerResult:
    """Integrate the reverse-time SDE with first-order Euler-Maruyama steps.

    Drift ``v - w/2 * s`` and diffusion ``sqrt(w)``; one model call per step
    supplies whichever of velocity/score the model predicts, the other is
    converted pointwise.  Steps where ``w(t) = 0`` skip the score side
    entirely (pure Euler ODE step).  After the N stochastic steps, a single
    deterministic drift step — no noise — moves the state from ``t_end`` to
    ``last_step_to`` when configured.
    """
    if spec.kind is not SamplerKind.EULER_MARUYAMA_SDE:
        raise ConfigError(
            f"euler_maruyama_sample requires a {SamplerKind.EULER_MARUYAMA_SDE.value!r} spec"
        )
    if spec.diffusion is None:
        raise ConfigError("the stochastic sampler requires a diffusion coefficient")
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise DomainError(f"n_samples must be positive, got {n_samples}")
    dim = _model_dimension(model)
    grid = time_grid(spec)
    dt = (spec.t_end - spec.t_start) / spec.steps
    root_abs_dt = math.sqrt(abs(dt))
    # Evaluate w on the step grid once; singularities surface here, before
    # any trajectory work is done.
    w_values = np.asarray(spec.diffusion(grid[:-1]), dtype=np.float64)
    if np.any(w_values < 0.0) or not np.all(np.isfinite(w_values)):
        raise DomainError("diffusion coefficient must be finite and >= 0 on the grid")
    sqrt_w = np.sqrt(w_values)
    final_dt = None
    if spec.last_step_to is not None and spec.last_step_to != spec.t_end:
        final_dt = spec.last_step_to - spec.t_end
    chunk = int(chunk_size) if chunk_size else DEFAULT_CHUNK
    outputs = []
    nfe_per_chunk = []
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        field = _CountingField(model, spec, y)
        noise = _chunk_noise(spec.seed, lo, hi, spec.steps + 1, dim)
        x = noise[:, 0, :]
        for i in range(spec.steps):
            t_here = float(grid[i])
            w_here = float(w_values[i])
            if w_here == 0.0:
                drift = field.velocity(x, t_here)
            else:
                velocity, score = field.velocity_and_score(x, t_here)
                drift = velocity - 0.5 * w_here * score
            x = x + dt * drift + (sqrt_w[i] * root_abs_dt) * noise[:, i + 1, :]
            _check_finite(x, i)
        if final_dt is not None:
            velocity, score = field.velocity_and_score(x, float(grid[-1]))
            last_w = float(spec.diffusion(float(grid[-1])))
            x = x + final_dt * (velocity - 0.5 * last_w * score)
            _check_finite(x, spec.steps)
        outputs.append(x)
        nfe_per_chunk.append(field.calls)
    assert len(set(nfe_per_chunk)) == 1
    return SamplerResult(np.concatenate(outputs, axis=0), nfe_per_chunk[0], grid)
