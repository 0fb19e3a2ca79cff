"""Readers for observation, distance and edge-list files."""

from __future__ import annotations

import csv

import numpy as np

from .graph import DistanceMatrix, GraphError, SimilarityGraph, as_observations, graph_from_edges


class InputFormatError(GraphError):
    """A file could not be parsed; messages carry the 1-based line number."""


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _numeric_rows(path, skip_header: bool):
    rows, header = [], None
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh), 1):
            toks = [t.strip() for t in raw]
            if not toks or all(t == "" for t in toks):
                continue
            if not all(_is_number(t) for t in toks):
                if skip_header and header is None and not rows:
                    header = toks
                    continue
                bad = next(t for t in toks if not _is_number(t))
                raise InputFormatError(f"{path}: line {lineno}: non-numeric value {bad!r}")
            if rows and len(toks) != len(rows[0][1]):
                raise InputFormatError(
                    f"{path}: line {lineno}: expected {len(rows[0][1])} columns, got {len(toks)}"
                )
            rows.append((lineno, [float(t) for t in toks]))
    if not rows:
        raise InputFormatError(f"{path}: no numeric rows")
    return header, rows


def read_observations(path) -> tuple[np.ndarray, list | None]:
    """``n x d`` matrix from a CSV, one observation per row. A first row with
    any non-numeric token is taken as a header."""
    header, rows = _numeric_rows(path, skip_header=True)
    values = np.array([r for _, r in rows])
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InputFormatError(f"{path}: line {rows[i][0]}: non-finite value in observation {i + 1}")
    return as_observations(values), header


def read_distances(path) -> DistanceMatrix:
    _, rows = _numeric_rows(path, skip_header=False)
    d = np.array([r for _, r in rows])
    if d.shape[0] != d.shape[1]:
        raise InputFormatError(f"{path}: distance matrix must be square, got {d.shape[0]}x{d.shape[1]}")
    try:
        return DistanceMatrix(d)
    except GraphError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def read_edges(path, n: int) -> SimilarityGraph:
    """Edge list with two 1-based node ids per line; ``#`` lines are comments."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            toks = s.split()
            if len(toks) != 2:
                raise InputFormatError(f"{path}: line {lineno}: expected 2 columns, got {len(toks)}")
            try:
                a, b = int(toks[0]), int(toks[1])
            except ValueError:
                raise InputFormatError(f"{path}: line {lineno}: node ids must be integers") from None
            if not (1 <= a <= n and 1 <= b <= n):
                raise InputFormatError(f"{path}: line {lineno}: node id outside [1, {n}]")
            pairs.append((a, b))
    try:
        return graph_from_edges(n, np.array(pairs, dtype=np.int64).reshape(-1, 2))
    except InputFormatError:
        raise
    except GraphError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def write_edges(path, g: SimilarityGraph) -> None:
    with open(path, "w") as fh:
        fh.write(f"# n={g.n} edges={g.edge_count}\n")
        for a, b in g.edges + 1:
            fh.write(f"{a}\t{b}\n")
