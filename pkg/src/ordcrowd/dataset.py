"""
Sparse multi-annotator ordinal ratings: scales, rating tables, category maps
and ground truth, plus the TSV readers/writers for each of them.

All model code works on dense 0-based integer indices. String ids from files
are mapped to those indices at load time and kept on the table so results
can be written back out under the original ids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateRating,
    IncompleteCategoryMap,
    InvalidLevel,
    ParseError,
    UnknownInstance,
)

RATINGS_HEADER = ("instance", "annotator", "rating")


# ---------------------------------------------------------------------------
# Ordinal scale
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrdinalScale:
    """Label values v_1 < ... < v_K and bin edges b_0 < ... < b_K.

    Level k (1-based) corresponds to value ``values[k-1]`` and to the bin
    ``[thresholds[k-1], thresholds[k])``.
    """

    values: tuple
    thresholds: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        b = np.asarray(self.thresholds, dtype=float)
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        object.__setattr__(self, "thresholds", tuple(float(x) for x in b))
        if v.ndim != 1 or v.size < 2:
            raise ValueError("an ordinal scale needs at least two levels")
        if b.size != v.size + 1:
            raise ValueError("need exactly K+1 thresholds for K values")
        if np.any(np.diff(v) <= 0) or np.any(np.diff(b) <= 0):
            raise ValueError("values and thresholds must be strictly increasing")
        if np.any(b[:-1] >= v) or np.any(v >= b[1:]):
            raise ValueError("every value must lie strictly inside its bin")

    @classmethod
    def default(cls, K: int) -> "OrdinalScale":
        """v_k = k with unit-width bins, b_0 = 0.5."""
        k = np.arange(1, K + 1, dtype=float)
        return cls(tuple(k), tuple(np.arange(K + 1) + 0.5))

    @property
    def K(self) -> int:
        return len(self.values)

    @cached_property
    def v(self) -> np.ndarray:
        return np.asarray(self.values)

    @cached_property
    def b(self) -> np.ndarray:
        return np.asarray(self.thresholds)

    def lower(self, levels):
        """Lower bin edge for 1-based ``levels``."""
        return self.b[np.asarray(levels) - 1]

    def upper(self, levels):
        return self.b[np.asarray(levels)]

    def value(self, levels):
        return self.v[np.asarray(levels) - 1]

    def level_of(self, x):
        """Threshold real values into levels, clamping outside [b_0, b_K)."""
        # smallest k with b_k > x
        k = np.searchsorted(self.b, np.asarray(x, dtype=float), side="right")
        return np.clip(k, 1, self.K)


# ---------------------------------------------------------------------------
# Ratings
# ---------------------------------------------------------------------------

def _group(keys: np.ndarray, n: int) -> tuple:
    order = np.argsort(keys, kind="stable")
    bounds = np.searchsorted(keys[order], np.arange(n + 1))
    return tuple(order[bounds[i]:bounds[i + 1]] for i in range(n))


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RatingsTable:
    """Observed ratings as parallel arrays of (instance, annotator, level).

    ``rating`` holds 1-based ordinal levels. Instances and annotators are
    dense indices into ``instance_ids`` / ``annotator_ids``. Instances may be
    listed that have no ratings at all.
    """

    instance: np.ndarray
    annotator: np.ndarray
    rating: np.ndarray
    n_levels: int
    instance_ids: tuple = ()
    annotator_ids: tuple = ()

    def __post_init__(self):
        inst = _readonly(self.instance, np.intp)
        ann = _readonly(self.annotator, np.intp)
        r = _readonly(self.rating, np.intp)
        if not (inst.shape == ann.shape == r.shape) or inst.ndim != 1:
            raise ValueError("instance, annotator and rating must be 1-d and equally long")
        M = int(inst.max()) + 1 if inst.size else 0
        N = int(ann.max()) + 1 if ann.size else 0
        iids = tuple(self.instance_ids) or tuple(str(i) for i in range(M))
        aids = tuple(self.annotator_ids) or tuple(str(i) for i in range(N))
        if len(iids) < M or len(aids) < N:
            raise ValueError("id lists are shorter than the largest index")
        if inst.size and (inst.min() < 0 or ann.min() < 0):
            raise ValueError("negative index")
        if self.n_levels < 2:
            raise ValueError("n_levels must be at least 2")
        bad = (r < 1) | (r > self.n_levels)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InvalidLevel(
                f"rating {int(r[i])} outside 1..{self.n_levels} "
                f"(instance {iids[inst[i]]!r}, annotator {aids[ann[i]]!r})")
        key = inst.astype(np.int64) * max(len(aids), 1) + ann
        uniq, counts = np.unique(key, return_counts=True)
        if np.any(counts > 1):
            k = uniq[np.argmax(counts > 1)]
            m, n = divmod(int(k), max(len(aids), 1))
            raise DuplicateRating(
                f"annotator {aids[n]!r} rated instance {iids[m]!r} more than once")
        object.__setattr__(self, "instance", inst)
        object.__setattr__(self, "annotator", ann)
        object.__setattr__(self, "rating", r)
        object.__setattr__(self, "instance_ids", iids)
        object.__setattr__(self, "annotator_ids", aids)

    @classmethod
    def from_triples(cls, triples: Iterable, n_levels: int,
                     instance_ids: Sequence | None = None,
                     annotator_ids: Sequence | None = None) -> "RatingsTable":
        """Build from ``(instance_id, annotator_id, level)`` triples.

        Ids are assigned dense indices in order of first appearance unless
        explicit id lists are given.
        """
        inst_index = {k: i for i, k in enumerate(instance_ids or ())}
        ann_index = {k: i for i, k in enumerate(annotator_ids or ())}
        fixed_inst = instance_ids is not None
        inst, ann, r = [], [], []
        for m_id, n_id, level in triples:
            if m_id not in inst_index:
                if fixed_inst:
                    raise UnknownInstance(m_id)
                inst_index[m_id] = len(inst_index)
            ann_index.setdefault(n_id, len(ann_index))
            inst.append(inst_index[m_id])
            ann.append(ann_index[n_id])
            r.append(int(level))
        return cls(np.asarray(inst, dtype=np.intp), np.asarray(ann, dtype=np.intp),
                   np.asarray(r, dtype=np.intp), n_levels,
                   tuple(inst_index), tuple(ann_index))

    @property
    def M(self) -> int:
        return len(self.instance_ids)

    @property
    def N(self) -> int:
        return len(self.annotator_ids)

    @property
    def K(self) -> int:
        return self.n_levels

    def __len__(self):
        return int(self.rating.size)

    @cached_property
    def by_instance(self) -> tuple:
        """Rating indices grouped per instance (the annotator sets l_m)."""
        return _group(self.instance, self.M)

    @cached_property
    def by_annotator(self) -> tuple:
        """Rating indices grouped per annotator (the instance sets l_n)."""
        return _group(self.annotator, self.N)

    @cached_property
    def instance_counts(self) -> np.ndarray:
        return np.bincount(self.instance, minlength=self.M)

    @cached_property
    def annotator_counts(self) -> np.ndarray:
        return np.bincount(self.annotator, minlength=self.N)

    @cached_property
    def onehot(self) -> np.ndarray:
        """(L, K) indicator matrix of observed levels."""
        out = np.zeros((len(self), self.K))
        out[np.arange(len(self)), self.rating - 1] = 1.0
        return out

    def triples(self) -> list:
        return [(self.instance_ids[m], self.annotator_ids[n], int(r))
                for m, n, r in zip(self.instance, self.annotator, self.rating)]

    def with_ratings(self, instance, annotator, rating, annotator_ids) -> "RatingsTable":
        """Copy with extra ratings appended; existing ids and indices are kept."""
        return RatingsTable(
            np.concatenate([self.instance, instance]),
            np.concatenate([self.annotator, annotator]),
            np.concatenate([self.rating, rating]),
            self.n_levels, self.instance_ids, tuple(annotator_ids))

    def permute_instances(self, perm) -> "RatingsTable":
        """Relabel instance ``m`` as ``perm[m]``."""
        perm = np.asarray(perm)
        ids = [None] * self.M
        for m, p in enumerate(perm):
            ids[p] = self.instance_ids[m]
        return RatingsTable(perm[self.instance], self.annotator, self.rating,
                            self.n_levels, tuple(ids), self.annotator_ids)


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def _read_two_columns(path, first="instance"):
    rows = _data_lines(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    if len(header) != 2 or header[0] != first:
        raise ParseError(f"expected a 2-column header starting with {first!r}", lineno)
    for lineno, fields in rows:
        if len(fields) != 2:
            raise ParseError(f"expected 2 tab-separated fields, got {len(fields)}", lineno)
        yield lineno, fields


def load_ratings(path, scale: OrdinalScale | int) -> RatingsTable:
    """Read a ``instance<TAB>annotator<TAB>rating`` file."""
    K = scale if isinstance(scale, int) else scale.K
    rows = _data_lines(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    if tuple(header) != RATINGS_HEADER:
        raise ParseError("header must be 'instance\\tannotator\\trating'", lineno)
    triples = []
    seen = {}
    for lineno, fields in rows:
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", lineno)
        m_id, n_id, r = fields
        try:
            level = int(r)
        except ValueError:
            raise ParseError(f"rating {r!r} is not an integer", lineno) from None
        if not 1 <= level <= K:
            raise InvalidLevel(f"line {lineno}: rating {level} outside 1..{K}")
        if (m_id, n_id) in seen:
            raise DuplicateRating(
                f"line {lineno}: annotator {n_id!r} already rated instance {m_id!r} "
                f"on line {seen[m_id, n_id]}")
        seen[m_id, n_id] = lineno
        triples.append((m_id, n_id, level))
    return RatingsTable.from_triples(triples, K)


def write_ratings(table: RatingsTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(RATINGS_HEADER) + "\n")
        for m_id, n_id, r in table.triples():
            fh.write(f"{m_id}\t{n_id}\t{r}\n")


# ---------------------------------------------------------------------------
# Categories
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CategoryMap:
    """Assignment of every instance to one of C categories (0-based)."""

    category: np.ndarray
    category_ids: tuple = ()

    def __post_init__(self):
        c = _readonly(self.category, np.intp)
        C = int(c.max()) + 1 if c.size else 0
        ids = tuple(self.category_ids) or tuple(str(i) for i in range(C))
        if len(ids) < C:
            raise ValueError("category id list shorter than the largest index")
        if c.size and c.min() < 0:
            raise ValueError("negative category index")
        object.__setattr__(self, "category", c)
        object.__setattr__(self, "category_ids", ids)

    @property
    def C(self) -> int:
        return len(self.category_ids)

    def of_ratings(self, table: RatingsTable) -> np.ndarray:
        """Category index of every rating."""
        return self.category[table.instance]

    def by_category(self, table: RatingsTable) -> tuple:
        """Rating indices grouped per category (the sets l_c)."""
        return _group(self.of_ratings(table), self.C)


def build_category_map(table: RatingsTable, granularity="single") -> CategoryMap:
    """Category map at one of three granularities.

    ``"single"`` puts every instance in one category, ``"per_instance"`` gives
    each instance its own, and any other value is read as the path of an
    ``instance<TAB>category`` file.
    """
    if granularity == "single":
        return CategoryMap(np.zeros(table.M, dtype=np.intp), ("all",))
    if granularity in ("per_instance", "per-instance"):
        return CategoryMap(np.arange(table.M), table.instance_ids)
    index = {m_id: i for i, m_id in enumerate(table.instance_ids)}
    cat = np.full(table.M, -1, dtype=np.intp)
    cat_index: dict = {}
    for lineno, (m_id, c_id) in _read_two_columns(granularity):
        if m_id not in index:
            continue
        cat[index[m_id]] = cat_index.setdefault(c_id, len(cat_index))
    missing = np.flatnonzero(cat < 0)
    if missing.size:
        raise IncompleteCategoryMap(
            f"{missing.size} instance(s) without a category, e.g. "
            f"{table.instance_ids[missing[0]]!r}")
    return CategoryMap(cat, tuple(cat_index))


def write_id_map(path, ids, labels, header=("instance", "category")) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for i, c in zip(ids, labels):
            fh.write(f"{i}\t{c}\n")


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Real-valued truth aligned to an instance index; NaN where unknown."""

    values: np.ndarray
    covered: np.ndarray = field(default=None)

    def __post_init__(self):
        z = np.array(self.values, dtype=float)
        cov = ~np.isnan(z) if self.covered is None else np.asarray(self.covered, dtype=bool)
        z.setflags(write=False)
        cov = cov.copy()
        cov.setflags(write=False)
        object.__setattr__(self, "values", z)
        object.__setattr__(self, "covered", cov)

    @property
    def coverage(self) -> np.ndarray:
        return np.flatnonzero(self.covered)


def load_truth(path, instance_ids: Sequence | RatingsTable) -> GroundTruth:
    """Read ``instance<TAB>value`` rows; partial coverage is allowed."""
    if isinstance(instance_ids, RatingsTable):
        instance_ids = instance_ids.instance_ids
    index = {m_id: i for i, m_id in enumerate(instance_ids)}
    z = np.full(len(index), np.nan)
    for lineno, (m_id, value) in _read_two_columns(path):
        if m_id not in index:
            raise UnknownInstance(f"line {lineno}: unknown instance {m_id!r}")
        try:
            z[index[m_id]] = float(value)
        except ValueError:
            raise ParseError(f"value {value!r} is not numeric", lineno) from None
    return GroundTruth(z)


def read_estimates(path) -> tuple:
    """Read an ``instance<TAB>z_hat`` file into (ids, values)."""
    ids, vals = [], []
    for lineno, (m_id, value) in _read_two_columns(path):
        try:
            vals.append(float(value))
        except ValueError:
            raise ParseError(f"value {value!r} is not numeric", lineno) from None
        ids.append(m_id)
    return tuple(ids), np.asarray(vals)


def read_id_map(path, instance_ids: Sequence) -> CategoryMap:
    """Map instances to groups (queries, categories) from a 2-column TSV."""
    index = {m_id: i for i, m_id in enumerate(instance_ids)}
    cat = np.full(len(index), -1, dtype=np.intp)
    groups: dict = {}
    for lineno, (m_id, g) in _read_two_columns(path):
        if m_id in index:
            cat[index[m_id]] = groups.setdefault(g, len(groups))
    missing = np.flatnonzero(cat < 0)
    if missing.size:
        raise IncompleteCategoryMap(
            f"{missing.size} instance(s) missing from {Path(path).name}")
    return CategoryMap(cat, tuple(groups))
