"""
Two-stage diagnosis of every student and exercise, and the text embedding of
the diagnoses into semantic tables. Only training-split logs are read.
"""
import os.path as osp
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

from dataset.data_split import DatasetSplit
from dataset.embedding_table import ENTITY_KINDS, EmbeddingTable
from utils.errors import ValidationError
from .client import EndpointConfig, chat_complete
from .embedder import embed_text
from .prompts import build_collab_prompt, build_diagnosis_prompt
from .records import DiagnosisRecord, JsonlCache
from .stub import placeholder_record


def group_train_logs(split: DatasetSplit, kind: str):
    """Training logs per entity id (ids in dataset-index order, logs in source order, oldest first)."""
    index = split.student_index if kind == 'student' else split.exercise_index
    groups = {eid: [] for eid in sorted(index, key=lambda k: index[k])}
    for log in split.train:
        groups[log.student_id if kind == 'student' else log.exercise_id].append(log)
    return groups


class Diagnoser(object):
    """Runs collab -> diagnosis for entities, sharing one client and cache."""
    def __init__(self, endpoint: EndpointConfig, cache: Optional[JsonlCache] = None, use_collab: bool = True,
        max_chars: Optional[int] = None, client=None, templates: Optional[dict] = None):
        self.endpoint = endpoint
        self.cache = cache
        self.use_collab = use_collab
        self.kws = {'max_chars': max_chars, 'templates': templates}
        self.client = client

    def _complete(self, prompt, kind, eid, stage, logs):
        return chat_complete(self.endpoint, prompt, kind, eid, stage, logs=logs, cache=self.cache, client=self.client)

    def diagnose(self, kind: str, eid: str, logs) -> List[DiagnosisRecord]:
        if len(logs) == 0:
            return [placeholder_record(kind, eid)]
        ret = []
        collab = None
        if self.use_collab:
            collab = self._complete(build_collab_prompt(kind, eid, logs, **self.kws), kind, eid, 'collab', logs)
            ret.append(collab)
        prompt = build_diagnosis_prompt(kind, eid, collab, logs, use_collab=self.use_collab, **self.kws)
        ret.append(self._complete(prompt, kind, eid, 'diagnosis', logs))
        return ret


def run_diagnosis(split: DatasetSplit, endpoint: EndpointConfig, cache_path: Optional[str] = None,
    use_collab: bool = True, max_chars: Optional[int] = None, client=None) -> List[DiagnosisRecord]:
    r"""Diagnose every student and exercise of the dataset index.

    Returns:
        records ordered by kind, then dataset index, then stage.
    """
    cache = JsonlCache(cache_path, key='prompt_digest')
    diagnoser = Diagnoser(endpoint, cache=cache, use_collab=use_collab, max_chars=max_chars, client=client)
    records = []
    for kind in ENTITY_KINDS:
        groups = group_train_logs(split, kind)
        n_empty = sum(len(v) == 0 for v in groups.values())
        print(f"[llm] diagnosing {len(groups)} {kind}(s) ({n_empty} without training logs) "
            f"with {endpoint.workers} worker(s).")
        # map() keeps the input order whatever the completion order
        with ThreadPoolExecutor(max_workers=endpoint.workers) as pool:
            for recs in pool.map(lambda item: diagnoser.diagnose(kind, item[0], item[1]), groups.items()):
                records += recs
    return records

def final_diagnoses(records: Sequence[DiagnosisRecord]) -> Dict[str, Dict[str, DiagnosisRecord]]:
    ret = {kind: dict() for kind in ENTITY_KINDS}
    for r in records:
        if r.stage == 'diagnosis':
            ret[r.kind][r.entity_id] = r
    return ret

def run_embedding(records: Sequence[DiagnosisRecord], split: DatasetSplit, endpoint: EndpointConfig,
    cache_path: Optional[str] = None, client=None) -> Dict[str, EmbeddingTable]:
    r"""Embed the diagnosis text of every indexed entity.

    Returns:
        {'student': EmbeddingTable, 'exercise': EmbeddingTable} aligned to the dataset index.
    """
    cache = JsonlCache(cache_path, key='digest')
    diagnoses = final_diagnoses(records)
    source = 'offline-stub' if endpoint.offline else 'remote'
    tables = dict()
    for kind in ENTITY_KINDS:
        index = split.student_index if kind == 'student' else split.exercise_index
        ids = sorted(index, key=lambda k: index[k])
        missing = [eid for eid in ids if eid not in diagnoses[kind]]
        if len(missing) > 0:
            raise ValidationError(f"{len(missing)} {kind}(s) have no diagnosis, e.g. {missing[:5]}.")
        texts = [diagnoses[kind][eid].text for eid in ids]
        with ThreadPoolExecutor(max_workers=endpoint.workers) as pool:
            rows = list(pool.map(lambda t: embed_text(endpoint, t, cache=cache, client=client), texts))
        tables[kind] = EmbeddingTable.from_rows(kind, ids, rows, source=source)
        print(f"[llm] embedded {len(ids)} {kind} diagnosis text(s) into {tables[kind].dim} dims.")
    return tables

def default_cache_path(out_dir: str, name: str) -> str:
    return osp.join(out_dir, 'cache', name)
