import os.path as osp
import json
import threading
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional

from dataset.embedding_table import check_kind
from utils.errors import ValidationError
from utils.io import ensure_dir, read_jsonl, write_jsonl


STAGES = ('collab', 'diagnosis')
SOURCES = ('remote', 'stub')


@dataclass(frozen=True)
class DiagnosisRecord:
    kind: str
    entity_id: str
    stage: str
    text: str
    reason: str
    prompt_digest: str
    source: str

    def __post_init__(self):
        check_kind(self.kind)
        if self.stage not in STAGES:
            raise ValidationError(f"Unknown stage `{self.stage}`; expected one of {STAGES}.")
        if self.source not in SOURCES:
            raise ValidationError(f"Unknown source `{self.source}`; expected one of {SOURCES}.")
        if not isinstance(self.text, str) or len(self.text.strip()) == 0:
            raise ValidationError(f"Empty {self.stage} text for {self.kind} `{self.entity_id}`.")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict):
        missing = [k for k in cls.__dataclass_fields__ if k not in d]
        if len(missing) > 0:
            raise ValidationError(f"Diagnosis record misses {missing}.")
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def write_diagnoses(records: List[DiagnosisRecord], path: str):
    write_jsonl(path, [r.to_dict() for r in records])
    print(f"[llm] saved {len(records)} diagnosis record(s) to {path}.")

def read_diagnoses(path: str) -> List[DiagnosisRecord]:
    return [DiagnosisRecord.from_dict(d) for d in read_jsonl(path)]


class JsonlCache(object):
    """Append-only JSON-lines cache keyed by one field of each row.

    Loading keeps the last row of a key; writes go through one lock so
    concurrent workers never interleave lines.
    """
    def __init__(self, path: Optional[str], key: str):
        self.path = path
        self.key = key
        self._rows: Dict[str, dict] = dict()
        self._lock = threading.Lock()
        if path is not None and osp.exists(path):
            for row in read_jsonl(path):
                self._rows[row[key]] = row
            print(f"[llm] loaded {len(self._rows)} cached row(s) from {path}.")

    def __len__(self):
        return len(self._rows)

    def __contains__(self, k):
        return k in self._rows

    def get(self, k) -> Optional[dict]:
        return self._rows.get(k, None)

    def put(self, row: dict):
        assert self.key in row, f"cache rows need the key field `{self.key}`."
        with self._lock:
            self._rows[row[self.key]] = row
            if self.path is not None:
                ensure_dir(osp.dirname(osp.abspath(self.path)))
                with open(self.path, 'a', encoding='utf-8') as f:
                    f.write(json.dumps(row, ensure_ascii=False) + '\n')
                    f.flush()
