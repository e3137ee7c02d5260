"""
Semantic embedding tables (one row per student or exercise) and their
cosine top-k neighbor index.
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from utils.errors import ConfigError, ContractError, ValidationError
from utils.io import read_jsonl, write_jsonl
from .data_split import DatasetSplit


ENTITY_KINDS = ('student', 'exercise')
SIM_DECIMALS = 12


def check_kind(kind):
    if kind not in ENTITY_KINDS:
        raise ContractError(f"Unknown entity kind `{kind}`; expected one of {ENTITY_KINDS}.")


@dataclass(frozen=True)
class EmbeddingTable:
    kind: str
    ids: Tuple[str, ...]
    matrix: torch.Tensor
    source: str = 'offline-stub'

    def __post_init__(self):
        check_kind(self.kind)
        assert self.matrix.dim() == 2 and self.matrix.shape[0] == len(self.ids), \
            f"Expected a ({len(self.ids)}, d) matrix, got {tuple(self.matrix.shape)}."

    @classmethod
    def from_rows(cls, kind: str, ids: Sequence[str], rows, source: str = 'offline-stub'):
        """Build a table and L2-normalize every row."""
        matrix = torch.as_tensor(np.asarray(rows, dtype=np.float64), dtype=torch.float64)
        if matrix.dim() != 2 or matrix.shape[0] == 0:
            raise ValidationError(f"The {kind} embedding table is empty or not a matrix.")
        norms = matrix.norm(dim=1)
        if not bool(torch.isfinite(matrix).all()) or bool((norms <= 0).any()):
            bad = [ids[i] for i in torch.nonzero(~(norms > 0)).flatten().tolist()]
            raise ValidationError(f"The {kind} embedding table has zero or non-finite rows: {bad[:5]}.")
        return cls(kind, tuple(ids), F.normalize(matrix, dim=1), source)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self):
        return len(self.ids)

    def to_records(self) -> List[dict]:
        return [
            {'kind': self.kind, 'id': eid, 'vector': self.matrix[i].tolist(), 'source': self.source}
            for i, eid in enumerate(self.ids)
        ]

    def aligned_to(self, index: Dict[str, int]) -> "EmbeddingTable":
        """Reorder rows to a dense index; every indexed id must be present."""
        pos = {eid: i for i, eid in enumerate(self.ids)}
        missing = [eid for eid in index if eid not in pos]
        if len(missing) > 0:
            raise ValidationError(f"{len(missing)} {self.kind}(s) have no embedding row, e.g. {missing[:5]}.")
        extra = len(self.ids) - len(index)
        if extra > 0:
            print(f"[warning] dropped {extra} {self.kind} embedding row(s) absent from the dataset index.")
        order = sorted(index.keys(), key=lambda k: index[k])
        rows = self.matrix[[pos[eid] for eid in order]]
        return EmbeddingTable(self.kind, tuple(order), rows, self.source)


def write_embedding_tables(tables: Sequence[EmbeddingTable], path: str):
    records = []
    for table in tables:
        records += table.to_records()
    write_jsonl(path, records)
    print(f"[info] saved {len(records)} embedding rows to {path}.")

def read_embedding_tables(path: str) -> Dict[str, EmbeddingTable]:
    grouped = {k: ([], [], set()) for k in ENTITY_KINDS}
    source = {}
    for line_no, rec in enumerate(read_jsonl(path), start=1):
        for key in ['kind', 'id', 'vector']:
            if key not in rec:
                raise ValidationError(f"{path}: record {line_no} misses `{key}`.")
        kind = rec['kind']
        check_kind(kind)
        ids, rows, seen = grouped[kind]
        if rec['id'] in seen:
            raise ValidationError(f"{path}: duplicate {kind} id `{rec['id']}`.")
        seen.add(rec['id'])
        ids.append(str(rec['id']))
        rows.append(rec['vector'])
        source[kind] = rec.get('source', 'offline-stub')
    tables = dict()
    for kind, (ids, rows, _) in grouped.items():
        if len(ids) > 0:
            dims = set(len(r) for r in rows)
            if len(dims) != 1:
                raise ValidationError(f"{path}: {kind} vectors have inconsistent dimensions {sorted(dims)}.")
            tables[kind] = EmbeddingTable.from_rows(kind, ids, rows, source=source[kind])
    return tables

def load_embedding_tables(path: str, split: DatasetSplit) -> Dict[str, EmbeddingTable]:
    r"""Read tables from JSON-lines and align them to the dataset indices.

    Returns:
        {'student': EmbeddingTable, 'exercise': EmbeddingTable}
    """
    tables = read_embedding_tables(path)
    for kind in ENTITY_KINDS:
        if kind not in tables:
            raise ValidationError(f"{path} holds no {kind} embeddings.")
    ret = {
        'student': tables['student'].aligned_to(split.student_index),
        'exercise': tables['exercise'].aligned_to(split.exercise_index),
    }
    print(f"[dataset] loaded semantic tables: {len(ret['student'])} students, {len(ret['exercise'])} exercises, "
          f"d_sem={ret['student'].dim}.")
    return ret


@dataclass(frozen=True)
class NeighborIndex:
    kind: str
    k: int
    neighbors: np.ndarray  # [n, k_eff] dense entity indices, most similar first

    def __len__(self):
        return self.neighbors.shape[0]

    def of(self, idx) -> np.ndarray:
        """Neighbors of one entity index (a row) or of an index array ([len(idx), k])."""
        return self.neighbors[np.asarray(idx, dtype=np.int64)]


def topk_neighbors(table: EmbeddingTable, k: int = 20) -> NeighborIndex:
    r"""The k most cosine-similar peers of every row, excluding the row itself.

    Ties are broken by ascending entity index; similarities are rounded to
    12 decimals first so that equal vectors compare equal.
    """
    n = len(table)
    if n < 2:
        raise ContractError(f"Need at least 2 {table.kind}s to build neighbors, got {n}.")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}.")
    k_eff = min(k, n - 1)

    mat = F.normalize(table.matrix, dim=1).cpu().numpy()
    sims = np.round(mat @ mat.T, SIM_DECIMALS)
    order = np.arange(n)
    neighbors = np.zeros((n, k_eff), dtype=np.int64)
    for i in range(n):
        # lexsort: last key is primary
        ranked = np.lexsort((order, -sims[i]))
        ranked = ranked[ranked != i]
        neighbors[i] = ranked[:k_eff]
    return NeighborIndex(table.kind, k_eff, neighbors)
