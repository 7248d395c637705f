"""Datasets: feature matrix, per-sample label sets, and split tags.

Also provides the seeded synthetic generator used for desk-scale runs:
class prototypes on a scaled unit sphere, unit Gaussian noise, optional
second labels, and a query/gallery split with the training set equal to
the gallery.
"""

from dataclasses import dataclass

import numpy as np

from .centers import LabelSet
from .errors import ConfigurationError, DimensionError, LabelError

TAG_TRAIN = "train"
TAG_GALLERY = "gallery"
TAG_QUERY = "query"
TAG_GALLERY_TRAIN = "gallery+train"
SPLIT_TAGS = (TAG_TRAIN, TAG_GALLERY, TAG_QUERY, TAG_GALLERY_TRAIN)


@dataclass(frozen=True)
class Dataset:
    """N samples: features (N x D), label sets over C classes, split tags."""

    features: np.ndarray
    labels: tuple
    C: int
    tags: tuple

    def __post_init__(self):
        F = np.ascontiguousarray(self.features, dtype=np.float64)
        if F.ndim != 2:
            raise DimensionError(f"features must be 2-D, got ndim={F.ndim}")
        if not np.all(np.isfinite(F)):
            raise DimensionError("features contain non-finite entries")
        F.setflags(write=False)
        object.__setattr__(self, "features", F)
        labels = tuple(
            l if isinstance(l, LabelSet) else LabelSet(l) for l in self.labels
        )
        object.__setattr__(self, "labels", labels)
        if len(labels) != F.shape[0]:
            raise DimensionError(
                f"{len(labels)} label sets vs {F.shape[0]} feature rows"
            )
        if self.C < 1:
            raise ConfigurationError(f"need at least one class, got C={self.C}")
        for n, ls in enumerate(labels):
            if ls.classes[-1] >= self.C:
                raise LabelError(
                    f"sample {n} has class index {ls.classes[-1]} >= C={self.C}"
                )
        tags = tuple(self.tags)
        object.__setattr__(self, "tags", tags)
        if len(tags) != F.shape[0]:
            raise DimensionError(
                f"{len(tags)} split tags vs {F.shape[0]} feature rows"
            )
        for n, tag in enumerate(tags):
            if tag not in SPLIT_TAGS:
                raise ConfigurationError(
                    f"sample {n} has unknown split tag {tag!r}"
                )

    @property
    def N(self):
        return self.features.shape[0]

    @property
    def D(self):
        return self.features.shape[1]

    def _indices(self, member):
        return np.array(
            [n for n, t in enumerate(self.tags) if member in t.split("+")],
            dtype=np.int64,
        )

    @property
    def train_indices(self):
        return self._indices(TAG_TRAIN)

    @property
    def gallery_indices(self):
        return self._indices(TAG_GALLERY)

    @property
    def query_indices(self):
        return self._indices(TAG_QUERY)


def multi_hot(labels, C):
    """Label sets -> N x C float64 indicator matrix."""
    Y = np.zeros((len(labels), C), dtype=np.float64)
    for n, ls in enumerate(labels):
        if not isinstance(ls, LabelSet):
            ls = LabelSet(ls)
        if ls.classes[-1] >= C:
            raise LabelError(
                f"sample {n} has class index {ls.classes[-1]} >= C={C}"
            )
        Y[n, list(ls.classes)] = 1.0
    return Y


def gen_synthetic(N, D, C, B_separation=6.0, multilabel_p=0.0, seed=0,
                  query_frac=0.1):
    """Seeded synthetic dataset of C noisy point clouds in R^D.

    Class prototypes are drawn on the unit sphere and scaled by
    B_separation; each sample is the mean of its labels' prototypes
    plus unit Gaussian noise. Base labels are assigned round robin, so
    every class is covered; a sample gains a second distinct label with
    probability multilabel_p. The first query_frac of samples (before a
    final seeded shuffle of row order) become queries, the rest are
    tagged gallery+train.
    """
    if C < 1:
        raise ConfigurationError(f"need at least one class, got C={C}")
    if D < C:
        raise ConfigurationError(f"need D >= C, got D={D}, C={C}")
    if not 0.0 <= multilabel_p < 1.0:
        raise ConfigurationError(
            f"multilabel_p must lie in [0, 1), got {multilabel_p}"
        )
    if multilabel_p > 0.0 and C < 2:
        raise ConfigurationError("second labels need at least two classes")
    if not 0.0 <= query_frac < 1.0:
        raise ConfigurationError(
            f"query_frac must lie in [0, 1), got {query_frac}"
        )
    if N < C:
        raise ConfigurationError(f"need N >= C for class coverage, got N={N}")
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((C, D))
    protos *= B_separation / np.linalg.norm(protos, axis=1, keepdims=True)
    base = np.arange(N, dtype=np.int64) % C
    second_mask = rng.random(N) < multilabel_p
    offsets = rng.integers(1, max(C, 2), size=N, dtype=np.int64)
    second = (base + offsets) % C
    means = protos[base].copy()
    means[second_mask] = (protos[base] + protos[second])[second_mask] / 2.0
    features = means + rng.standard_normal((N, D))
    labels = [
        LabelSet((base[n], second[n])) if second_mask[n] else LabelSet((base[n],))
        for n in range(N)
    ]
    n_query = int(round(query_frac * N))
    tags = [TAG_QUERY] * n_query + [TAG_GALLERY_TRAIN] * (N - n_query)
    perm = rng.permutation(N)
    return Dataset(
        features=features[perm],
        labels=tuple(labels[int(i)] for i in perm),
        C=C,
        tags=tuple(tags[int(i)] for i in perm),
    )
