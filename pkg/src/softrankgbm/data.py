"""LETOR / SVMLight-with-qid ingestion.

Each line looks like ``<label> qid:<id> <f>:<v> ... [# comment]`` with
1-based sparse feature indices. Documents of one query are stored as a
contiguous block, in file order.
"""
from __future__ import annotations

import io
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np


class LetorParseError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class QueryDataset:
    features: np.ndarray
    labels: np.ndarray
    query_offsets: np.ndarray
    query_ids: tuple[str, ...]
    comments: tuple[str, ...] | None = field(default=None, compare=False)
    # position of each row in the source file, when it was parsed from one
    source_rows: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        offsets = self.query_offsets
        n = len(self.labels)
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(
                f"features shape {self.features.shape} does not match {n} labels"
            )
        if len(offsets) != len(self.query_ids) + 1:
            raise ValueError("query_offsets must have one more entry than query_ids")
        if offsets[0] != 0 or offsets[-1] != n or np.any(np.diff(offsets) <= 0):
            raise ValueError("query_offsets must increase strictly from 0 to N")
        if np.any(self.labels < 0):
            raise ValueError("labels must be non-negative")

    @property
    def num_queries(self) -> int:
        return len(self.query_ids)

    @property
    def num_docs(self) -> int:
        return len(self.labels)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def query_slices(self) -> list[slice]:
        o = self.query_offsets
        return [slice(int(o[i]), int(o[i + 1])) for i in range(len(o) - 1)]

    def query_sizes(self) -> np.ndarray:
        return np.diff(self.query_offsets)

    def subset(self, query_indices: Iterable[int]) -> "QueryDataset":
        """Dataset restricted to the given queries, in the given order."""
        slices = self.query_slices()
        idx = [int(i) for i in query_indices]
        rows = np.concatenate([np.arange(slices[i].start, slices[i].stop) for i in idx])
        sizes = [slices[i].stop - slices[i].start for i in idx]
        return QueryDataset(
            features=self.features[rows],
            labels=self.labels[rows],
            query_offsets=np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
            query_ids=tuple(self.query_ids[i] for i in idx),
        )

    def with_num_features(self, d: int) -> "QueryDataset":
        """Zero-pad the feature matrix to ``d`` columns."""
        have = self.num_features
        if d < have:
            raise ValueError(f"dataset has {have} features, cannot shrink to {d}")
        if d == have:
            return self
        pad = np.zeros((self.num_docs, d - have))
        return QueryDataset(
            features=np.hstack([self.features, pad]),
            labels=self.labels,
            query_offsets=self.query_offsets,
            query_ids=self.query_ids,
            comments=self.comments,
            source_rows=self.source_rows,
        )

    def __eq__(self, other):
        if not isinstance(other, QueryDataset):
            return NotImplemented
        return (
            self.query_ids == other.query_ids
            and np.array_equal(self.query_offsets, other.query_offsets)
            and np.array_equal(self.labels, other.labels)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )


def from_arrays(features, labels, query_sizes, query_ids=None) -> QueryDataset:
    sizes = np.asarray(query_sizes, dtype=np.int64)
    if query_ids is None:
        query_ids = tuple(str(i + 1) for i in range(len(sizes)))
    return QueryDataset(
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.float64),
        query_offsets=np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
        query_ids=tuple(str(q) for q in query_ids),
    )


def _parse_line(line: str, line_no: int):
    body, _, comment = line.partition("#")
    tokens = body.split()
    if not tokens:
        return None
    try:
        label = float(tokens[0])
    except ValueError:
        raise LetorParseError(f"malformed label {tokens[0]!r}", line_no) from None
    if not np.isfinite(label) or label < 0:
        raise LetorParseError(f"label must be finite and non-negative, got {tokens[0]!r}", line_no)
    if len(tokens) < 2 or not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        got = tokens[1] if len(tokens) > 1 else "end of line"
        raise LetorParseError(f"expected qid:<id>, got {got!r}", line_no)
    qid = tokens[1][4:]
    feats: dict[int, float] = {}
    for tok in tokens[2:]:
        key, sep, val = tok.partition(":")
        try:
            if not sep:
                raise ValueError
            index = int(key)
            value = float(val)
        except ValueError:
            raise LetorParseError(f"malformed feature token {tok!r}", line_no) from None
        if index <= 0:
            raise LetorParseError(f"feature index must be >= 1, got {index}", line_no)
        if not np.isfinite(value):
            raise LetorParseError(f"non-finite feature value in {tok!r}", line_no)
        feats[index] = value
    return label, qid, feats, comment.strip()


def parse_letor(
    source: str | os.PathLike | IO,
    *,
    num_features: int | None = None,
    allow_interleaved: bool = False,
) -> QueryDataset:
    """Parse a LETOR text file (path, text stream or byte stream).

    Queries whose lines are not contiguous raise :class:`LetorParseError`
    unless ``allow_interleaved`` is set, in which case rows are regrouped by
    first appearance of each qid, keeping file order inside each query.
    ``num_features`` zero-pads to a fixed width; a file using a higher index
    is an error.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return parse_letor(fh, num_features=num_features, allow_interleaved=allow_interleaved)
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    labels: list[float] = []
    qids: list[str] = []
    rows: list[dict[int, float]] = []
    comments: list[str] = []
    seen: dict[str, int] = {}
    interleaved = False
    max_index = 0
    for line_no, raw in enumerate(io.StringIO(text, newline=None), start=1):
        parsed = _parse_line(raw.strip(), line_no)
        if parsed is None:
            continue
        label, qid, feats, comment = parsed
        if qid in seen and qids[-1] != qid:
            if not allow_interleaved:
                raise LetorParseError(f"qid {qid!r} is not contiguous", line_no)
            interleaved = True
        seen.setdefault(qid, len(seen))
        labels.append(label)
        qids.append(qid)
        rows.append(feats)
        comments.append(comment)
        if feats:
            max_index = max(max_index, max(feats))

    if not labels:
        raise EmptyDatasetError("no documents found in input")
    d = max_index
    if num_features is not None:
        if max_index > num_features:
            raise LetorParseError(
                f"feature index {max_index} exceeds expected dimension {num_features}"
            )
        d = num_features

    X = np.zeros((len(rows), d))
    for r, feats in enumerate(rows):
        for index, value in feats.items():
            X[r, index - 1] = value
    y = np.asarray(labels)

    order = np.arange(len(qids))
    if interleaved:
        group = np.array([seen[q] for q in qids])
        order = np.argsort(group, kind="stable")
    X, y = X[order], y[order]
    qids_sorted = [qids[i] for i in order]
    starts = [0] + [i for i in range(1, len(qids_sorted)) if qids_sorted[i] != qids_sorted[i - 1]]
    return QueryDataset(
        features=X,
        labels=y,
        query_offsets=np.array(starts + [len(qids_sorted)], dtype=np.int64),
        query_ids=tuple(qids_sorted[s] for s in starts),
        comments=tuple(comments[i] for i in order),
        source_rows=order,
    )


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def write_letor(dataset: QueryDataset, dest: str | os.PathLike | IO[str]) -> None:
    """Write ``dataset`` as dense LETOR text; parsing it back is lossless."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            write_letor(dataset, fh)
        return
    d = dataset.num_features
    for qid, sl in zip(dataset.query_ids, dataset.query_slices()):
        for r in range(sl.start, sl.stop):
            feats = " ".join(f"{j + 1}:{_fmt(v)}" for j, v in enumerate(dataset.features[r]))
            line = f"{_fmt(dataset.labels[r])} qid:{qid}"
            if d:
                line += " " + feats
            dest.write(line + "\n")


def dataset_stats(dataset: QueryDataset) -> dict:
    sizes = dataset.query_sizes()
    hist = Counter(dataset.labels.tolist())
    return {
        "queries": dataset.num_queries,
        "documents": dataset.num_docs,
        "features": dataset.num_features,
        "label_histogram": {k: hist[k] for k in sorted(hist)},
        "query_size_min": int(sizes.min()),
        "query_size_mean": float(sizes.mean()),
        "query_size_max": int(sizes.max()),
    }
