"""Ground-truth toy distributions, exact samplers, and sample-file I/O.

The presets are Gaussian mixtures with well-separated modes so that mode
coverage is countable:

``two-gauss-1d``
    1-D, two equal-weight unit-variance components at means -2 and +2.
``grid-9``
    2-D, nine equal-weight components on a 3x3 grid with spacing 4
    (means in {-4, 0, 4}^2), isotropic component standard deviation 0.3.
``ring-8``
    2-D, eight equal-weight components on a circle of radius 4, isotropic
    component standard deviation 0.2.
``two-moons-gmm``
    2-D mixture tracing two interleaved half-circles (six components per
    moon): the upper moon on a unit circle centered at the origin, the lower
    moon on a unit circle centered at (1, 0.5) reflected downward, isotropic
    component standard deviation 0.15.

Classes are mixture components throughout ("class = component"), which keeps
conditional — and therefore guided — ground truth exact.

Sample files are plain text: a header line ``# d=<dim> n=<count> seed=<seed>``
(optionally extended with ``nfe=<evals>`` and ``labels=1``), then one sample
per row as space-separated full-precision decimal floats, with a trailing
integer label column when labels are declared.  Writes are atomic
(temp file + rename), and identical inputs produce byte-identical files.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .field import GaussianMixture

__all__ = [
    "PRESET_NAMES",
    "get_preset",
    "draw",
    "ToyDataset",
    "write_samples",
    "read_samples",
]


def _two_gauss_1d() -> GaussianMixture:
    return GaussianMixture(
        weights=[0.5, 0.5],
        means=[[-2.0], [2.0]],
        covariances=np.array([1.0, 1.0]),
    )


def _grid_9() -> GaussianMixture:
    coords = [-4.0, 0.0, 4.0]
    means = [[cx, cy] for cy in coords for cx in coords]
    return GaussianMixture(
        weights=np.full(9, 1.0 / 9.0),
        means=means,
        covariances=np.full(9, 0.3 ** 2),
    )


def _ring_8() -> GaussianMixture:
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    means = np.stack([4.0 * np.cos(angles), 4.0 * np.sin(angles)], axis=1)
    return GaussianMixture(
        weights=np.full(8, 1.0 / 8.0),
        means=means,
        covariances=np.full(8, 0.2 ** 2),
    )


def _two_moons_gmm() -> GaussianMixture:
    per_moon = 6
    angles = np.pi * (np.arange(per_moon) + 0.5) / per_moon
    upper = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    lower = np.stack([1.0 - np.cos(angles), 0.5 - np.sin(angles)], axis=1)
    means = np.concatenate([upper, lower], axis=0)
    return GaussianMixture(
        weights=np.full(2 * per_moon, 1.0 / (2 * per_moon)),
        means=means,
        covariances=np.full(2 * per_moon, 0.15 ** 2),
    )


_PRESETS = {
    "two-gauss-1d": _two_gauss_1d,
    "grid-9": _grid_9,
    "ring-8": _ring_8,
    "two-moons-gmm": _two_moons_gmm,
}

#: Names accepted wherever a dataset preset is expected.
PRESET_NAMES = tuple(sorted(_PRESETS))


def get_preset(name: str) -> GaussianMixture:
    """Build a named preset mixture."""
    try:
        builder = _PRESETS[str(name)]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        ) from None
    return builder()


def draw(gmm: GaussianMixture, n: int, seed: int,
         with_labels: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Exact ancestral draws from a mixture.

    Picks components by their categorical weights, then draws from the chosen
    Gaussian.  Returns ``(samples (n, d), labels (n,) or None)``.
    """
    n = int(n)
    if n <= 0:
        raise DomainError(f"sample count must be positive, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    labels = rng.choice(gmm.n_components, size=n, p=gmm.weights)
    z = rng.standard_normal((n, gmm.dimension))
    samples = gmm.means[labels] + np.einsum(
        "nde,ne->nd", gmm.cholesky_factors[labels], z)
    return samples, (labels if with_labels else None)


@dataclass
class ToyDataset:
    """A finite data source: either an exact mixture or a fixed sample array.

    ``resample(rng, count)`` yields training batches — fresh exact draws when
    backed by a mixture, draws with replacement when backed by a file.
    """

    samples: np.ndarray | None = None
    labels: np.ndarray | None = None
    gmm: GaussianMixture | None = None

    def __post_init__(self) -> None:
        if (self.gmm is None) == (self.samples is None):
            raise ConfigError("ToyDataset needs exactly one of gmm or samples")
        if self.samples is not None:
            self.samples = np.asarray(self.samples, dtype=np.float64)
            if self.samples.ndim != 2:
                raise DomainError("dataset samples must be an (n, d) array")
            if not np.all(np.isfinite(self.samples)):
                raise DomainError("dataset samples must be finite")
            if self.labels is not None:
                self.labels = np.asarray(self.labels)
                if self.labels.shape != (self.samples.shape[0],):
                    raise DomainError("labels must be one integer per sample")

    @property
    def dimension(self) -> int:
        if self.gmm is not None:
            return self.gmm.dimension
        return self.samples.shape[1]

    @property
    def num_classes(self) -> int | None:
        """Class count when labels exist (components for mixtures), else None."""
        if self.gmm is not None:
            return self.gmm.n_components
        if self.labels is not None:
            return int(self.labels.max()) + 1
        return None

    def resample(self, rng: np.random.Generator, count: int
                 ) -> tuple[np.ndarray, np.ndarray | None]:
        if self.gmm is not None:
            labels = rng.choice(self.gmm.n_components, size=count, p=self.gmm.weights)
            z = rng.standard_normal((count, self.gmm.dimension))
            x = self.gmm.means[labels] + np.einsum(
                "nde,ne->nd", self.gmm.cholesky_factors[labels], z)
            return x, labels
        idx = rng.integers(0, self.samples.shape[0], size=count)
        lab = self.labels[idx] if self.labels is not None else None
        return self.samples[idx], lab


# ---------------------------------------------------------------------------
# Tabular sample files
# ---------------------------------------------------------------------------


def write_samples(path: str, samples: np.ndarray, seed: int,
                  nfe: int | None = None,
                  labels: np.ndarray | None = None) -> None:
    """Write samples in the tabular text format, atomically.

    Floats are written with ``repr`` (shortest round-trip), so re-reading
    reproduces the array bit-for-bit and identical inputs produce
    byte-identical files.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainError(f"samples must be (n, d), got shape {arr.shape}")
    header = f"# d={arr.shape[1]} n={arr.shape[0]} seed={int(seed)}"
    if nfe is not None:
        header += f" nfe={int(nfe)}"
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (arr.shape[0],):
            raise DomainError("labels must be one integer per sample row")
        header += " labels=1"
    lines = [header]
    if labels is None:
        for row in arr:
            lines.append(" ".join(repr(float(v)) for v in row))
    else:
        for row, lab in zip(arr, labels):
            lines.append(" ".join(repr(float(v)) for v in row) + f" {int(lab)}")
    body = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-samples-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_samples(path: str) -> tuple[np.ndarray, np.ndarray | None, dict]:
    """Read a tabular sample file.

    Returns ``(samples (n, d), labels (n,) or None, header metadata dict)``.
    """
    if not os.path.exists(path):
        raise ConfigError(f"sample file not found: {path}")
    with open(path, "r") as handle:
        first = handle.readline().strip()
        if not first.startswith("#"):
            raise ConfigError(f"{path}: missing '# d=... n=... seed=...' header")
        meta: dict = {}
        for token in first[1:].split():
            if "=" not in token:
                raise ConfigError(f"{path}: malformed header token {token!r}")
            key, value = token.split("=", 1)
            meta[key] = int(value)
        for key in ("d", "n", "seed"):
            if key not in meta:
                raise ConfigError(f"{path}: header lacks {key}=...")
        has_labels = meta.get("labels", 0) == 1
        rows = []
        labels = []
        for line in handle:
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if has_labels:
                labels.append(int(fields[-1]))
                fields = fields[:-1]
            if len(fields) != meta["d"]:
                raise ConfigError(
                    f"{path}: row has {len(fields)} values, header says d={meta['d']}"
                )
            rows.append([float(v) for v in fields])
    samples = np.asarray(rows, dtype=np.float64).reshape(len(rows), meta["d"])
    if samples.shape[0] != meta["n"]:
        raise ConfigError(
            f"{path}: {samples.shape[0]} rows, header says n={meta['n']}"
        )
    return samples, (np.asarray(labels, dtype=np.int64) if has_labels else None), meta
