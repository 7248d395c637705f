"""Bit-packed Hamming retrieval and the MAP / precision-recall metrics.

Gallery codes are packed into ceil(B/64) 64-bit words per sample, bit j
at bit (j mod 64) of word (j div 64), and scanned linearly with a
popcount kernel. Rankings order by distance, then ascending id, so
every result is deterministic regardless of storage order.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .centers import LabelSet
from .errors import ConfigurationError, DimensionError, LabelError

SAME_CLASS = "same-class"
SHARE_ANY = "share-any-label"
RELEVANCE_RULES = (SAME_CLASS, SHARE_ANY)


def _as_bits(code, name="code"):
    if isinstance(code, str):
        if set(code) - {"0", "1"}:
            raise DimensionError(f"{name} string must be 0/1 characters")
        code = [int(ch) for ch in code]
    A = np.asarray(code)
    if A.ndim != 1 or A.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty bit vector")
    if not np.isin(A, (0, 1)).all():
        raise DimensionError(f"{name} entries must be 0 or 1")
    return A.astype(np.uint8)


def pack_codes(bits):
    """Pack an N x B matrix of 0/1 into N x ceil(B/64) uint64 words."""
    A = np.asarray(bits)
    if A.ndim != 2 or A.shape[1] < 1:
        raise DimensionError(f"expected N x B bit matrix, got shape {A.shape}")
    if not np.isin(A, (0, 1)).all():
        raise DimensionError("code bits must be 0 or 1")
    A = np.ascontiguousarray(A, dtype=np.uint8)
    n_words = (A.shape[1] + 63) // 64
    by = np.packbits(A, axis=1, bitorder="little")
    padded = np.zeros((A.shape[0], n_words * 8), dtype=np.uint8)
    padded[:, : by.shape[1]] = by
    return padded.view("<u8")


def unpack_codes(words, B):
    """Inverse of pack_codes for W = ceil(B/64) words per row."""
    Wd = np.ascontiguousarray(words, dtype=np.uint64)
    if Wd.ndim != 2:
        raise DimensionError(f"expected N x W word matrix, got shape {Wd.shape}")
    if Wd.shape[1] != (B + 63) // 64:
        raise DimensionError(
            f"{Wd.shape[1]} words cannot hold B={B} bits"
        )
    by = Wd.view("<u8").view(np.uint8).reshape(Wd.shape[0], -1)
    bits = np.unpackbits(by, axis=1, bitorder="little")
    return bits[:, :B].copy()


def hamming(a, b):
    """Number of differing bits between two codewords of equal length."""
    A = _as_bits(a, "a")
    Bv = _as_bits(b, "b")
    if A.shape[0] != Bv.shape[0]:
        raise DimensionError(
            f"codeword lengths differ: {A.shape[0]} vs {Bv.shape[0]}"
        )
    return kernels.pair_distance(pack_codes(A[None, :])[0], pack_codes(Bv[None, :])[0])


class PackedCodeIndex:
    """Immutable gallery of packed codes with ids and optional labels."""

    def __init__(self, words, B, ids, labels=None):
        self.words = np.ascontiguousarray(words, dtype=np.uint64)
        if self.words.ndim != 2:
            raise DimensionError("words must be an N x W matrix")
        self.B = int(B)
        if self.B < 1 or self.words.shape[1] != (self.B + 63) // 64:
            raise DimensionError(
                f"word count {self.words.shape[1]} does not match B={self.B}"
            )
        tail = self.B % 64
        if tail and self.words.shape[0]:
            mask = np.uint64((1 << tail) - 1)
            if np.any(self.words[:, -1] & ~mask):
                raise DimensionError("unused high bits must be zero")
        self.ids = np.asarray(ids, dtype=np.int64)
        if self.ids.ndim != 1 or self.ids.shape[0] != self.words.shape[0]:
            raise DimensionError("ids must align with code rows")
        if len(np.unique(self.ids)) != self.ids.shape[0]:
            raise ConfigurationError("gallery ids must be unique")
        if labels is not None:
            labels = tuple(
                l if isinstance(l, LabelSet) else LabelSet(l) for l in labels
            )
            if len(labels) != self.words.shape[0]:
                raise DimensionError("labels must align with code rows")
        self.labels = labels
        self.words.setflags(write=False)
        self.ids.setflags(write=False)

    @classmethod
    def from_bits(cls, bits, ids, labels=None):
        A = np.asarray(bits)
        return cls(pack_codes(A), A.shape[1], ids, labels)

    @property
    def N(self):
        return self.words.shape[0]

    def distances(self, code):
        """Hamming distance from one codeword to every indexed sample."""
        q = _as_bits(code, "query")
        if q.shape[0] != self.B:
            raise DimensionError(
                f"query has {q.shape[0]} bits, index holds {self.B}"
            )
        return kernels.scan_distances(self.words, pack_codes(q[None, :])[0])


@dataclass(frozen=True)
class QueryResult:
    """Top-k ranking: parallel id/distance arrays, clipped when k > N."""

    ids: np.ndarray
    distances: np.ndarray
    clipped: bool


def query_topk(index, code, k):
    """The k indexed samples nearest to `code`, ties by ascending id."""
    if k < 1:
        raise ConfigurationError(f"k must be positive, got {k}")
    clipped = k > index.N
    k = min(k, index.N)
    dists = index.distances(code)
    order = np.lexsort((index.ids, dists))[:k]
    return QueryResult(
        ids=index.ids[order], distances=dists[order], clipped=clipped
    )


def average_precision(relevance, R_total):
    """AP over a ranked relevance vector, denominator min(R_total, k)."""
    rel = np.asarray(relevance, dtype=np.float64)
    if rel.ndim != 1 or rel.shape[0] < 1:
        raise DimensionError("relevance must be a non-empty vector")
    if not np.isin(rel, (0, 1)).all():
        raise DimensionError("relevance entries must be 0 or 1")
    if R_total < 0:
        raise ConfigurationError(f"R_total must be >= 0, got {R_total}")
    denom = min(int(R_total), rel.shape[0])
    if denom == 0:
        return 0.0
    precision = np.cumsum(rel) / np.arange(1, rel.shape[0] + 1)
    return float((precision * rel).sum() / denom)


def _check_rule(rule):
    if rule not in RELEVANCE_RULES:
        raise ConfigurationError(
            f"unknown relevance rule {rule!r}, expected one of {RELEVANCE_RULES}"
        )


def _require_labels(index, name):
    if index.labels is None:
        raise ConfigurationError(f"{name} index carries no labels")


def relevance_mask(query_labels, gallery, rule):
    """Boolean relevance of every gallery sample to one query."""
    _check_rule(rule)
    _require_labels(gallery, "gallery")
    if not isinstance(query_labels, LabelSet):
        query_labels = LabelSet(query_labels)
    if rule == SAME_CLASS:
        sizes = {len(l) for l in gallery.labels} | {len(query_labels)}
        if sizes != {1}:
            raise LabelError("same-class rule requires single-label data")
        q = query_labels.classes[0]
        return np.fromiter(
            (l.classes[0] == q for l in gallery.labels),
            dtype=bool,
            count=gallery.N,
        )
    qset = set(query_labels.classes)
    return np.fromiter(
        (not qset.isdisjoint(l.classes) for l in gallery.labels),
        dtype=bool,
        count=gallery.N,
    )


@dataclass(frozen=True)
class MapResult:
    """Mean AP plus the per-query values it averages."""

    map: float
    query_ids: np.ndarray
    aps: np.ndarray


def map_at_k(queries, gallery, k, rule):
    """Mean average precision at k of every query against the gallery."""
    _require_labels(queries, "query")
    if queries.N == 0:
        raise ConfigurationError("query set is empty")
    if k < 1:
        raise ConfigurationError(f"k must be positive, got {k}")
    aps = np.empty(queries.N, dtype=np.float64)
    q_bits = unpack_codes(queries.words, queries.B)
    for i in range(queries.N):
        rel_mask = relevance_mask(queries.labels[i], gallery, rule)
        dists = gallery.distances(q_bits[i])
        order = np.lexsort((gallery.ids, dists))[: min(k, gallery.N)]
        aps[i] = average_precision(
            rel_mask[order].astype(np.uint8), int(rel_mask.sum())
        )
    return MapResult(map=float(aps.mean()), query_ids=queries.ids.copy(), aps=aps)


def pr_curve(queries, gallery, rule):
    """Macro-averaged precision and recall at every Hamming threshold.

    Thresholds run 0..B inclusive; a query retrieving nothing at a
    threshold contributes precision 1 there. Queries with no relevant
    gallery samples are skipped.
    """
    _require_labels(queries, "query")
    if queries.N == 0:
        raise ConfigurationError("query set is empty")
    B = gallery.B
    thresholds = np.arange(B + 1, dtype=np.int64)
    precision_sum = np.zeros(B + 1, dtype=np.float64)
    recall_sum = np.zeros(B + 1, dtype=np.float64)
    counted = 0
    q_bits = unpack_codes(queries.words, queries.B)
    for i in range(queries.N):
        rel_mask = relevance_mask(queries.labels[i], gallery, rule)
        R_total = int(rel_mask.sum())
        if R_total == 0:
            continue
        dists = gallery.distances(q_bits[i])
        retrieved = np.cumsum(np.bincount(dists, minlength=B + 1))
        hits = np.cumsum(np.bincount(dists[rel_mask], minlength=B + 1))
        precision = np.where(retrieved > 0, hits / np.maximum(retrieved, 1), 1.0)
        precision_sum += precision
        recall_sum += hits / R_total
        counted += 1
    if counted == 0:
        raise ConfigurationError("no query has a relevant gallery sample")
    return thresholds, recall_sum / counted, precision_sum / counted
