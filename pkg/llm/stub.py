"""
Deterministic offline stand-in for the chat model: template text built from
per-concept accuracy of the given logs.
"""
import json
from collections import OrderedDict
from typing import List, Optional, Sequence

from dataset.embedding_table import check_kind
from dataset.response_log import ResponseLog
from utils.errors import ContractError
from utils.io import text_digest
from .records import DiagnosisRecord


MASTERY_THRESHOLD = 0.5
NO_HISTORY_TEXT = 'no study history available'


def _ratio(c, n):
    return f"{c}/{n}={c / n:.2f}"

def concept_accuracy(logs: Sequence[ResponseLog]):
    """OrderedDict concept -> (correct, total), sorted by concept name."""
    stats = dict()
    for log in logs:
        for k in log.concepts:
            c, n = stats.get(k, (0, 0))
            stats[k] = (c + log.correct, n + 1)
    return OrderedDict((k, stats[k]) for k in sorted(stats))

def concept_union(logs: Sequence[ResponseLog]) -> List[str]:
    """Every concept tag of the logs, sorted by name."""
    return sorted({k for log in logs for k in log.concepts})

def _logs_digest(kind, entity_id, stage, logs):
    payload = [kind, entity_id, stage] + [[l.student_id, l.exercise_id, list(l.concepts), l.correct] for l in logs]
    return text_digest(json.dumps(payload))

def _student_text(logs, stage):
    n = len(logs)
    c = sum(log.correct for log in logs)
    if stage == 'collab':
        return f"answered {n} exercise(s) with overall accuracy {_ratio(c, n)}"
    mastered, weak = [], []
    for k, (ck, nk) in concept_accuracy(logs).items():
        (mastered if ck / nk >= MASTERY_THRESHOLD else weak).append(f"{k} ({_ratio(ck, nk)})")
    return "mastered: {}; weak: {}".format(', '.join(mastered) or 'none', ', '.join(weak) or 'none')

def _exercise_text(logs, stage):
    n = len(logs)
    c = sum(log.correct for log in logs)
    concepts = ', '.join(concept_union(logs))
    if stage == 'collab':
        return f"attempted by {n} student(s) with accuracy {_ratio(c, n)}"
    level = 'easy' if c / n >= MASTERY_THRESHOLD else 'hard'
    return f"examines: {concepts}; {level} ({_ratio(c, n)} correct)"

def stub_diagnose(kind: str, entity_id: str, logs: Sequence[ResponseLog], stage: str = 'diagnosis',
    prompt_digest: Optional[str] = None) -> DiagnosisRecord:
    check_kind(kind)
    if len(logs) == 0:
        raise ContractError(f"Cannot diagnose {kind} `{entity_id}` without logs.")
    text = _student_text(logs, stage) if kind == 'student' else _exercise_text(logs, stage)
    if prompt_digest is None:
        prompt_digest = _logs_digest(kind, entity_id, stage, logs)
    return DiagnosisRecord(kind, entity_id, stage, text, 'per-concept accuracy on the study history',
        prompt_digest, 'stub')

def placeholder_record(kind: str, entity_id: str) -> DiagnosisRecord:
    """Record for an entity without training logs; no model is called."""
    return DiagnosisRecord(kind, entity_id, 'diagnosis', NO_HISTORY_TEXT, 'no training logs',
        _logs_digest(kind, entity_id, 'diagnosis', []), 'stub')
