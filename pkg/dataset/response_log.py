"""
Response-log records and their two line-oriented text formats.

CSV (5 fields, no commas inside content):
    student_id,exercise_id,concept;concept;...,score,content
JSON-lines:
    {"student_id": ..., "exercise_id": ..., "concepts": [...], "score": 0|1, "content": ...}
"""
import io
import json
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple, Union

from utils.errors import ParseError, ValidationError
from utils.io import atomic_write_text


CSV_HEADER = 'student_id,exercise_id,concepts,score,content'
CSV_NUM_FIELDS = 5


@dataclass(frozen=True)
class ResponseLog:
    student_id: str
    exercise_id: str
    concepts: Tuple[str, ...]
    correct: int
    content: Optional[str] = None

    def __post_init__(self):
        if len(self.concepts) == 0:
            raise ValidationError(f"empty concept list for ({self.student_id}, {self.exercise_id}).")
        if self.correct not in (0, 1):
            raise ValidationError(f"score must be 0 or 1, got {self.correct}.")

    def to_dict(self):
        return {
            'student_id': self.student_id,
            'exercise_id': self.exercise_id,
            'concepts': list(self.concepts),
            'score': self.correct,
            'content': self.content,
        }

    def to_csv_line(self):
        content = '' if self.content is None else self.content
        if ',' in content or '\n' in content:
            raise ValidationError(f"content of {self.exercise_id} holds a comma or newline; use JSON-lines instead.")
        return ','.join([self.student_id, self.exercise_id, ';'.join(self.concepts), str(self.correct), content])


def _at(line_no):
    return '' if line_no is None else f"line {line_no}: "

def _clean_concepts(concepts) -> Tuple[str, ...]:
    seen = []
    for k in concepts:
        k = str(k).strip()
        if len(k) > 0 and k not in seen:
            seen.append(k)
    return tuple(seen)

def _parse_score(score, line_no):
    if isinstance(score, bool):
        score = int(score)
    try:
        value = float(score)
    except (TypeError, ValueError):
        raise ValidationError(f"{_at(line_no)}score must be 0 or 1, got {score!r}.")
    if value not in (0.0, 1.0):
        raise ValidationError(f"{_at(line_no)}score must be 0 or 1, got {score!r}.")
    return int(value)

def make_log(student_id, exercise_id, concepts, score, content=None, line_no=None) -> ResponseLog:
    sid, eid = str(student_id).strip(), str(exercise_id).strip()
    if len(sid) == 0 or len(eid) == 0:
        raise ValidationError(f"{_at(line_no)}empty student or exercise id.")
    concepts = _clean_concepts(concepts)
    if len(concepts) == 0:
        raise ValidationError(f"{_at(line_no)}empty concept list.")
    correct = _parse_score(score, line_no)
    if content is not None:
        content = str(content)
        content = content if len(content.strip()) > 0 else None
    return ResponseLog(sid, eid, concepts, correct, content)

def _parse_csv_line(line, line_no):
    fields = line.split(',')
    if len(fields) != CSV_NUM_FIELDS:
        raise ParseError(f"expected {CSV_NUM_FIELDS} comma-separated fields, got {len(fields)}", line_no=line_no)
    sid, eid, concepts, score, content = fields
    return make_log(sid, eid, concepts.split(';'), score.strip(), content, line_no=line_no)

def _parse_jsonl_line(line, line_no):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON ({e.msg})", line_no=line_no)
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", line_no=line_no)
    for key in ['student_id', 'exercise_id', 'concepts', 'score']:
        if key not in obj:
            raise ParseError(f"missing key `{key}`", line_no=line_no)
    concepts = obj['concepts']
    if isinstance(concepts, str):
        concepts = concepts.split(';')
    return make_log(obj['student_id'], obj['exercise_id'], concepts, obj['score'], obj.get('content', None), line_no=line_no)

def parse_response_logs(source: Union[str, Iterable[str]], fmt: str = 'auto') -> List[ResponseLog]:
    r"""Parse response logs from text (or an iterable of lines) in input order.

    Args:
        source: the text, or its lines.
        fmt (string): 'csv', 'jsonl', or 'auto' (JSON-lines iff the first record starts with `{`).
    """
    assert fmt in ['auto', 'csv', 'jsonl'], f"Unknown log format {fmt}."
    lines = io.StringIO(source) if isinstance(source, str) else source
    logs = []
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip('\r\n')
        if len(line.strip()) == 0:
            continue
        if fmt == 'auto':
            fmt = 'jsonl' if line.lstrip().startswith('{') else 'csv'
        if fmt == 'csv':
            if len(logs) == 0 and line.strip() == CSV_HEADER:
                continue
            logs.append(_parse_csv_line(line, line_no))
        else:
            logs.append(_parse_jsonl_line(line, line_no))
    return logs

def read_response_logs(path: str, fmt: str = 'auto') -> List[ResponseLog]:
    if fmt == 'auto':
        if path.endswith('.jsonl') or path.endswith('.json'):
            fmt = 'jsonl'
        elif path.endswith('.csv'):
            fmt = 'csv'
    with open(path, 'r', encoding='utf-8') as f:
        logs = parse_response_logs(f, fmt=fmt)
    print(f"[dataset] read {len(logs)} response logs from {path}.")
    return logs

def format_response_logs(logs: List[ResponseLog], fmt: str = 'jsonl') -> str:
    assert fmt in ['csv', 'jsonl'], f"Unknown log format {fmt}."
    if fmt == 'csv':
        lines = [CSV_HEADER] + [log.to_csv_line() for log in logs]
    else:
        lines = [json.dumps(log.to_dict(), ensure_ascii=False) for log in logs]
    return ''.join(line + '\n' for line in lines)

def write_response_logs(logs: List[ResponseLog], path: str, fmt: Optional[str] = None):
    if fmt is None:
        fmt = 'csv' if path.endswith('.csv') else 'jsonl'
    atomic_write_text(path, format_response_logs(logs, fmt=fmt))
