"""Velocity/score fields: exact Gaussian-mixture oracles, parameterization
conversion, and classifier-free guidance.

Every generative quantity in this package is an expectation over the
interpolant state ``x_t = alpha(t)*x_star + sigma(t)*eps``:

* the **velocity** field ``v(x, t) = E[alpha_dot*x_star + sigma_dot*eps | x_t = x]``
  (drift of the deterministic probability-flow dynamics), and
* the **score** field ``s(x, t) = grad_x log p_t(x) = -E[eps | x_t = x]/sigma(t)``.

For Gaussian-mixture data both are available in closed form, which makes the
mixtures exact oracles for every sampler and loss in the package.  The two
parameterizations are linearly related at each ``(x, t)``:

    v = (alpha_dot/alpha) * x - lambda(t)*sigma(t) * s          (velocity from score)
    s = (alpha*v - alpha_dot*x) / (sigma*(alpha_dot*sigma - alpha*sigma_dot))

The conversions are refused at their singular endpoints (``alpha = 0`` on the
velocity side, ``sigma = 0`` on the score side); samplers clip their time
windows instead of extrapolating.

Mixture posterior computations run in the log domain with max-subtraction so
component responsibilities survive small ``sigma(t)``.  Field evaluation is
read-only after construction and safe for concurrent use.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError, UnconditionalModelError
from .schedule import InterpolantSchedule

__all__ = [
    "Prediction",
    "Conditioning",
    "interpolate",
    "interpolant_derivative",
    "score_from_velocity",
    "velocity_from_score",
    "GaussianMixture",
    "mixture_log_density",
    "gmm_marginal_score",
    "gmm_posterior_means",
    "gmm_marginal_velocity",
    "gmm_class_posterior",
    "gmm_conditional_score",
    "gmm_conditional_velocity",
    "FieldModel",
    "AnalyticMixtureField",
    "guided_field",
]


class Prediction(str, enum.Enum):
    """What a field model outputs at ``(x, t)``."""

    VELOCITY = "velocity"
    SCORE = "score"


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to shape (n, d); report whether it arrived as a bare vector."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise DomainError(f"points must have shape (d,) or (n, d), got {arr.shape}")


def _per_sample(value: float | np.ndarray) -> np.ndarray:
    """Reshape a scalar or (n,)-shaped time quantity for (n, d) broadcasting."""
    arr = np.asarray(value, dtype=np.float64)
    return arr[..., None] if arr.ndim == 1 else arr


def interpolate(schedule: InterpolantSchedule, x_star: np.ndarray,
                eps: np.ndarray, t: float | np.ndarray) -> np.ndarray:
    """The interpolant state ``alpha(t)*x_star + sigma(t)*eps``.

    ``x_star`` and ``eps`` may be single d-vectors or (n, d) batches; ``t``
    may be a scalar or a per-row (n,) array.
    """
    xs, was_vector = _as_batch(x_star)
    ep, _ = _as_batch(eps)
    if xs.shape != ep.shape:
        raise DomainError(f"shape mismatch: x_star {xs.shape} vs eps {ep.shape}")
    out = _per_sample(schedule.alpha(t)) * xs + _per_sample(schedule.sigma(t)) * ep
    return out[0] if was_vector else out


def interpolant_derivative(schedule: InterpolantSchedule, x_star: np.ndarray,
                           eps: np.ndarray, t: float | np.ndarray) -> np.ndarray:
    """Time derivative of the interpolant state,
    ``alpha_dot(t)*x_star + sigma_dot(t)*eps`` — the velocity-loss regression
    target."""
    xs, was_vector = _as_batch(x_star)
    ep, _ = _as_batch(eps)
    if xs.shape != ep.shape:
        raise DomainError(f"shape mismatch: x_star {xs.shape} vs eps {ep.shape}")
    out = _per_sample(schedule.alpha_dot(t)) * xs + _per_sample(schedule.sigma_dot(t)) * ep
    return out[0] if was_vector else out


def score_from_velocity(schedule: InterpolantSchedule, v_value: np.ndarray,
                        x: np.ndarray, t: float | np.ndarray) -> np.ndarray:
    """Convert a velocity value at ``(x, t)`` into the score value there.

    ``s = (alpha*v - alpha_dot*x) / (sigma*(alpha_dot*sigma - alpha*sigma_dot))``.
    Refused where ``sigma(t) = 0``.
    """
    vv, was_vector = _as_batch(v_value)
    xx, _ = _as_batch(x)
    sig = np.asarray(schedule.sigma(t), dtype=np.float64)
    if np.any(sig == 0.0):
        raise SingularityError(
            "score_from_velocity is singular where sigma(t) = 0; clip the window"
        )
    denom = np.asarray(schedule.conversion_denominator(t), dtype=np.float64)
    if np.any(denom == 0.0):
        raise SingularityError(
            "score_from_velocity: conversion denominator vanished"
        )
    a = schedule.alpha(t)
    a_dot = schedule.alpha_dot(t)
    out = (_per_sample(a) * vv - _per_sample(a_dot) * xx) / _per_sample(sig * denom)
    return out[0] if was_vector else out


def velocity_from_score(schedule: InterpolantSchedule, s_value: np.ndarray,
                        x: np.ndarray, t: float | np.ndarray) -> np.ndarray:
    """Convert a score value at ``(x, t)`` into the velocity value there.

    ``v = (alpha_dot/alpha)*x - lambda(t)*sigma(t)*s``.  Refused where
    ``alpha(t) = 0`` (and, for sbdm-vp, at ``t = 0`` where lambda is
    singular).
    """
    sv, was_vector = _as_batch(s_value)
    xx, _ = _as_batch(x)
    lam_sig = schedule.lambda_weight(t) * schedule.sigma(t)
    ratio = schedule.alpha_dot(t) / schedule.alpha(t)
    out = _per_sample(ratio) * xx - _per_sample(lam_sig) * sv
    return out[0] if was_vector else out


# ---------------------------------------------------------------------------
# Gaussian mixtures and their exact fields
# ---------------------------------------------------------------------------


class GaussianMixture:
    """A weighted Gaussian mixture with exact time-t marginals.

    Under a schedule, the interpolant marginal of mixture data is itself a
    mixture: ``p_t = sum_k w_k N(alpha*mu_k, alpha^2*Sigma_k + sigma^2*I)``,
    so density, score, velocity, and component posteriors are all closed-form.

    Parameters
    ----------
    weights:
        (K,) probability vector; must sum to 1 within 1e-12.
    means:
        (K, d) component means.
    covariances:
        ``None`` for identity; a (K,) vector of per-component isotropic
        variances; a (K, d) array of diagonal variances; or a (K, d, d) array
        of full SPD matrices.
    """

    def __init__(self, weights, means, covariances=None) -> None:
        w = np.asarray(weights, dtype=np.float64)
        m = np.asarray(means, dtype=np.float64)
        if m.ndim == 1:
            m = m[:, None]
        if w.ndim != 1 or m.ndim != 2 or w.shape[0] != m.shape[0]:
            raise DomainError(
                f"weights (K,) and means (K, d) required, got {w.shape} / {m.shape}"
            )
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise DomainError("mixture weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise DomainError(f"mixture weights must sum to 1, got {w.sum()!r}")
        K, d = m.shape
        if covariances is None:
            c = np.broadcast_to(np.eye(d), (K, d, d)).copy()
        else:
            c = np.asarray(covariances, dtype=np.float64)
            if c.shape == (K,):
                c = c[:, None, None] * np.eye(d)
            elif c.shape == (K, d):
                c = np.einsum("kd,de->kde", c, np.eye(d))
            elif c.shape != (K, d, d):
                raise DomainError(
                    f"covariances must be (K,), (K, d) or (K, d, d), got {c.shape}"
                )
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise DomainError("covariances must be symmetric positive definite") from exc
        self.weights = w
        self.means = m
        self.covariances = c
        self._chol = chol
        self._log_weights = np.log(w, out=np.full_like(w, -np.inf), where=w > 0)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def cholesky_factors(self) -> np.ndarray:
        """(K, d, d) Cholesky factors of the component covariances."""
        return self._chol

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (f"GaussianMixture(K={self.n_components}, d={self.dimension})")


def _time_scalars(schedule: InterpolantSchedule, t) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(schedule.alpha(t), dtype=np.float64)
    s = np.asarray(schedule.sigma(t), dtype=np.float64)
    return a, s


def _mixture_parts(gmm: GaussianMixture, schedule: InterpolantSchedule,
                   x: np.ndarray, t) -> dict:
    """Shared per-component quantities of the time-t mixture at points x.

    Returns arrays with a trailing component axis K: the residuals
    ``x - alpha*mu_k``, the solved values ``C_k^{-1}(x - alpha*mu_k)``, the
    per-component log densities, the log marginal density, and the
    responsibilities, computed with log-sum-exp stabilization.
    """
    xx, was_vector = _as_batch(x)
    n, d = xx.shape
    if d != gmm.dimension:
        raise DomainError(f"points have dimension {d}, mixture has {gmm.dimension}")
    a, s = _time_scalars(schedule, t)
    if a.ndim == 1 and a.shape[0] != n:
        raise DomainError(f"per-sample t has length {a.shape[0]}, expected {n}")
    # Covariance of the time-t mixture component: alpha^2 Sigma_k + sigma^2 I.
    a2 = (a * a)[..., None, None, None]
    s2 = (s * s)[..., None, None, None]
    eye = np.eye(d)
    cov = a2 * gmm.covariances + s2 * eye  # (K,d,d) or (n,K,d,d)
    diff = xx[:, None, :] - a[..., None, None] * gmm.means  # (n,K,d)
    if cov.ndim == 3:
        solved = np.linalg.solve(cov[None], diff[..., None])[..., 0]
        _, logdet = np.linalg.slogdet(cov)  # (K,)
    else:
        solved = np.linalg.solve(cov, diff[..., None])[..., 0]
        _, logdet = np.linalg.slogdet(cov)  # (n,K)
    quad = np.einsum("nkd,nkd->nk", diff, solved)
    log_comp = -0.5 * (d * np.log(2.0 * np.pi) + logdet + quad)  # (n,K)
    weighted = gmm._log_weights + log_comp
    peak = np.max(weighted, axis=1, keepdims=True)
    log_density = peak[:, 0] + np.log(np.sum(np.exp(weighted - peak), axis=1))
    resp = np.exp(weighted - log_density[:, None])
    return {
        "was_vector": was_vector,
        "alpha": a,
        "sigma": s,
        "diff": diff,
        "solved": solved,
        "log_comp": log_comp,
        "log_density": log_density,
        "responsibilities": resp,
    }


def mixture_log_density(gmm: GaussianMixture, schedule: InterpolantSchedule,
                        x: np.ndarray, t) -> float | np.ndarray:
    """Exact ``log p_t(x)`` of the time-t mixture marginal."""
    parts = _mixture_parts(gmm, schedule, x, t)
    out = parts["log_density"]
    return float(out[0]) if parts["was_vector"] else out


def gmm_marginal_score(gmm: GaussianMixture, schedule: InterpolantSchedule,
                       x: np.ndarray, t) -> np.ndarray:
    """Exact score ``grad_x log p_t(x)`` of the time-t mixture marginal.

    Defined for every ``t`` in [0, 1]: the time-t component covariances
    ``alpha^2 Sigma_k + sigma^2 I`` stay positive definite on the whole
    interval.
    """
    parts = _mixture_parts(gmm, schedule, x, t)
    score = -np.einsum("nk,nkd->nd", parts["responsibilities"], parts["solved"])
    return score[0] if parts["was_vector"] else score


def gmm_posterior_means(gmm: GaussianMixture, schedule: InterpolantSchedule,
                        x: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means ``E[x_star | x_t = x]`` and ``E[eps | x_t = x]``.

    These satisfy the consistency identity
    ``alpha*E[x_star|x] + sigma*E[eps|x] = x`` exactly, and give the velocity
    as ``alpha_dot*E[x_star|x] + sigma_dot*E[eps|x]``.
    """
    parts = _mixture_parts(gmm, schedule, x, t)
    a = parts["alpha"][..., None, None]
    sig = parts["sigma"][..., None, None]
    # Per-component posterior means, then responsibility-weighted combination.
    post_x = gmm.means + a * np.einsum("kde,nke->nkd", gmm.covariances, parts["solved"])
    post_e = sig * parts["solved"]
    resp = parts["responsibilities"]
    e_x = np.einsum("nk,nkd->nd", resp, post_x)
    e_e = np.einsum("nk,nkd->nd", resp, post_e)
    if parts["was_vector"]:
        return e_x[0], e_e[0]
    return e_x, e_e


def gmm_marginal_velocity(gmm: GaussianMixture, schedule: InterpolantSchedule,
                          x: np.ndarray, t) -> np.ndarray:
    """Exact velocity of the time-t mixture marginal.

    Deliberately implemented as ``velocity_from_score`` applied to
    :func:`gmm_marginal_score` — the two oracles share one code path, so their
    mutual consistency is structural.  Inherits the conversion's singularity
    at ``alpha(t) = 0``.
    """
    return velocity_from_score(schedule, gmm_marginal_score(gmm, schedule, x, t), x, t)


def gmm_class_posterior(gmm: GaussianMixture, schedule: InterpolantSchedule,
                        x: np.ndarray, t) -> np.ndarray:
    """Component responsibilities ``p_t(k | x)`` of the time-t mixture, (n, K)."""
    parts = _mixture_parts(gmm, schedule, x, t)
    resp = parts["responsibilities"]
    return resp[0] if parts["was_vector"] else resp


def _check_component(gmm: GaussianMixture, component: int) -> int:
    k = int(component)
    if not 0 <= k < gmm.n_components:
        raise DomainError(
            f"component {component!r} out of range [0, {gmm.n_components})"
        )
    return k


def gmm_conditional_score(gmm: GaussianMixture, schedule: InterpolantSchedule,
                          x: np.ndarray, t, component: int) -> np.ndarray:
    """Exact score of a single component's time-t marginal (class = component)."""
    k = _check_component(gmm, component)
    single = GaussianMixture(np.array([1.0]), gmm.means[k:k + 1],
                             gmm.covariances[k:k + 1])
    return gmm_marginal_score(single, schedule, x, t)


def gmm_conditional_velocity(gmm: GaussianMixture, schedule: InterpolantSchedule,
                             x: np.ndarray, t, component: int) -> np.ndarray:
    """Exact velocity of a single component's time-t marginal."""
    k = _check_component(gmm, component)
    return velocity_from_score(
        schedule, gmm_conditional_score(gmm, schedule, x, t, k), x, t
    )


# ---------------------------------------------------------------------------
# Field models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Conditioning:
    """Label-space descriptor for conditional models.

    ``num_classes`` real classes with ids ``0 .. num_classes-1``; the null
    (unconditional) token is the extra id ``null_id == num_classes``.
    """

    num_classes: int

    @property
    def null_id(self) -> int:
        return self.num_classes

    def validate(self, y: int | np.ndarray) -> np.ndarray:
        arr = np.asarray(y)
        if not np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.int64)
        if np.any(arr < 0) or np.any(arr > self.null_id):
            raise DomainError(
                f"label out of range: valid ids are 0..{self.num_classes - 1} "
                f"plus the null token {self.null_id}"
            )
        return arr


class FieldModel:
    """A velocity or score field evaluatable at ``(x, t)`` with optional labels.

    Attributes
    ----------
    prediction:
        Which field the model outputs (:class:`Prediction`).
    schedule:
        The interpolant schedule the field lives on.
    source:
        ``"analytic-gmm"`` or ``"learned-mlp"``.
    conditioning:
        :class:`Conditioning` for conditional models, else ``None``.

    Evaluation is read-only after construction; concurrent use is part of the
    contract.
    """

    prediction: Prediction
    schedule: InterpolantSchedule
    source: str = ""
    conditioning: Conditioning | None = None

    @property
    def is_conditional(self) -> bool:
        return self.conditioning is not None

    def evaluate(self, x: np.ndarray, t, y=None) -> np.ndarray:
        """Field value at ``(x, t)``; same shape as ``x``.

        ``y`` is ``None`` (unconditional / null token), a single class id
        applied to the whole batch, or a per-row integer array.  Conditional
        models accept every class id plus the null token.
        """
        raise NotImplementedError


class AnalyticMixtureField(FieldModel):
    """Exact mixture oracle exposed through the :class:`FieldModel` interface.

    With ``conditional=True`` the mixture components double as classes
    (class = component), so conditional ground truth — and therefore guided
    ground truth — is exact.
    """

    source = "analytic-gmm"

    def __init__(self, gmm: GaussianMixture, schedule: InterpolantSchedule,
                 prediction: Prediction = Prediction.VELOCITY,
                 conditional: bool = False) -> None:
        self.gmm = gmm
        self.schedule = schedule
        self.prediction = Prediction(prediction)
        self.conditioning = Conditioning(gmm.n_components) if conditional else None

    def _single(self, x: np.ndarray, t, component: int | None) -> np.ndarray:
        if self.prediction is Prediction.SCORE:
            if component is None:
                return gmm_marginal_score(self.gmm, self.schedule, x, t)
            return gmm_conditional_score(self.gmm, self.schedule, x, t, component)
        if component is None:
            return gmm_marginal_velocity(self.gmm, self.schedule, x, t)
        return gmm_conditional_velocity(self.gmm, self.schedule, x, t, component)

    def evaluate(self, x: np.ndarray, t, y=None) -> np.ndarray:
        if y is None:
            return self._single(x, t, None)
        if self.conditioning is None:
            raise UnconditionalModelError(
                "labels were passed to an unconditional analytic field"
            )
        labels = self.conditioning.validate(y)
        if labels.ndim == 0:
            k = int(labels)
            return self._single(x, t, None if k == self.conditioning.null_id else k)
        xx, was_vector = _as_batch(x)
        if was_vector or labels.shape[0] != xx.shape[0]:
            raise DomainError("per-row labels require a matching (n, d) batch")
        out = np.empty_like(xx)
        t_arr = np.asarray(t, dtype=np.float64)
        for k in np.unique(labels):
            mask = labels == k
            t_sel = t_arr[mask] if t_arr.ndim == 1 else t_arr
            out[mask] = self._single(
                xx[mask], t_sel,
                None if int(k) == self.conditioning.null_id else int(k),
            )
        return out


def guided_field(model: FieldModel, zeta: float, x: np.ndarray, t,
                 y) -> np.ndarray:
    """Classifier-free-guided field value
    ``zeta * f(x, t, y) + (1 - zeta) * f(x, t, null)``.

    Applies uniformly to velocity and score models (the conversion between
    the two is linear in the field value, so mixing commutes with it).
    ``zeta = 1`` returns the conditional evaluation itself and ``zeta = 0``
    the unconditional one — each a single model call, bitwise identical to
    calling the model directly.  Guided sampling draws from the tempered
    density proportional to ``p_t(x) * p_t(y|x)**zeta``.
    """
    if model.conditioning is None:
        raise UnconditionalModelError(
            "guided evaluation requires a class-conditional model"
        )
    zeta = float(zeta)
    if not np.isfinite(zeta) or zeta < 0.0:
        raise DomainError(f"guidance strength must be >= 0, got {zeta!r}")
    if y is None:
        raise DomainError("guided evaluation requires a real class label y")
    labels = model.conditioning.validate(y)
    if np.any(labels == model.conditioning.null_id):
        raise DomainError("guided evaluation requires a real class, not the null token")
    if zeta == 1.0:
        return model.evaluate(x, t, labels)
    null = model.conditioning.null_id
    if zeta == 0.0:
        return model.evaluate(x, t, null)
    conditional = model.evaluate(x, t, labels)
    unconditional = model.evaluate(x, t, null)
    return zeta * conditional + (1.0 - zeta) * unconditional
