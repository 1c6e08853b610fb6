"""Exception taxonomy shared by every driftlab module.

The CLI maps these onto process exit codes: configuration and usage problems
(:class:`ConfigError` and subclasses) exit with code 2, numerical failures
(:class:`SingularityError`, :class:`NonFiniteError`) exit with code 3.
"""

from __future__ import annotations


class DriftlabError(Exception):
    """Base class for all errors raised by driftlab."""


class ConfigError(DriftlabError):
    """Invalid configuration, flags, or input files (CLI exit code 2)."""


class MissingProfileError(ConfigError):
    """A cost-tuned diffusion coefficient was requested without the per-time
    loss profile it needs."""


class DomainError(DriftlabError, ValueError):
    """An argument lies outside an operation's mathematical domain."""


class SingularityError(DomainError):
    """Evaluation was refused at a time where the requested quantity is
    singular (for example a score/velocity conversion at an interval
    endpoint).  Samplers are expected to clip their time windows instead of
    relying on limits being taken here."""


class UnconditionalModelError(DomainError):
    """Guided evaluation was requested on a model without class conditioning."""


class NonFiniteError(DriftlabError, ArithmeticError):
    """A computation produced NaN or infinity.

    Attributes
    ----------
    step:
        Integrator or optimizer step index at which the blow-up was detected,
        when known.
    t_bin:
        Time-bin identifier for training-loss blow-ups, when known.
    """

    def __init__(self, message: str, *, step: int | None = None,
                 t_bin: int | None = None) -> None:
        details = []
        if step is not None:
            details.append(f"step={step}")
        if t_bin is not None:
            details.append(f"t_bin={t_bin}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.step = step
        self.t_bin = t_bin
