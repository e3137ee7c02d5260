"""
Prompt builders for the two diagnosis stages.

Every input prompt is a JSON document rendered from training-split response
logs, which are passed oldest first (source order). When a character limit is
set, the oldest history entries are dropped first until the prompt fits (one
entry always remains).
"""
import os.path as osp
import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from dataset.embedding_table import check_kind
from dataset.response_log import ResponseLog
from utils.errors import ContractError
from utils.io import read_json, text_digest
from .records import DiagnosisRecord
from .stub import concept_union


DEFAULT_PROMPT_PATH = osp.join(osp.dirname(osp.dirname(osp.abspath(__file__))), 'tools', 'diagnosis_prompts.json')
PROFILE_KEY = 'PROFILE'
_TEMPLATES = dict()


def load_prompt_templates(path: Optional[str] = None) -> dict:
    path = DEFAULT_PROMPT_PATH if path is None else path
    if path not in _TEMPLATES:
        templates = read_json(path)
        for name in ['student_collab', 'exercise_collab', 'student_diagnosis', 'exercise_diagnosis']:
            assert name in templates, f"prompt template `{name}` is missing in {path}."
        _TEMPLATES[path] = templates
    return _TEMPLATES[path]


@dataclass(frozen=True)
class PromptPair:
    system_prompt: str
    input_prompt: str

    def __post_init__(self):
        try:
            json.loads(self.input_prompt)
        except json.JSONDecodeError as e:
            raise ContractError(f"The input prompt is not a JSON document: {e}.")

    @property
    def digest(self) -> str:
        return prompt_digest(self)

    def to_messages(self):
        return [
            {'role': 'system', 'content': self.system_prompt},
            {'role': 'user', 'content': self.input_prompt},
        ]


def prompt_digest(prompt: PromptPair) -> str:
    return text_digest(prompt.system_prompt + '\x00' + prompt.input_prompt)

def _concept_field(log: ResponseLog) -> str:
    return ', '.join(log.concepts)

def _render(make_payload: Callable[[list], dict], entries: list, max_chars: Optional[int]) -> str:
    text = json.dumps(make_payload(entries), ensure_ascii=False)
    if max_chars is None:
        return text
    n_dropped = 0
    while len(text) > max_chars and len(entries) > 1:
        entries = entries[1:]
        n_dropped += 1
        text = json.dumps(make_payload(entries), ensure_ascii=False)
    if n_dropped > 0:
        print(f"[llm] dropped {n_dropped} oldest history entries to fit {max_chars} characters.")
    return text


#############################################
#     Student-centric / exercise-centric
#############################################
def _student_entries(logs: Sequence[ResponseLog]):
    return [
        {'content': log.content if log.content else log.exercise_id, 'concept': _concept_field(log), 'answer': log.correct}
        for log in logs
    ]

def _exercise_header(exercise_id, logs: Sequence[ResponseLog]):
    if any(log.exercise_id != exercise_id for log in logs):
        raise ContractError(f"Responses of other exercises were passed for exercise `{exercise_id}`.")
    content = next((log.content for log in logs if log.content), exercise_id)
    return {
        'content': content,
        'concepts': concept_union(logs),
    }

def _exercise_entries(logs: Sequence[ResponseLog]):
    return [{'student': log.student_id, 'answer': log.correct} for log in logs]

def _check_student_logs(student_id, logs):
    if len(logs) == 0:
        raise ContractError(f"Student `{student_id}` has no study history.")
    if any(log.student_id != student_id for log in logs):
        raise ContractError(f"Logs of other students were passed for student `{student_id}`.")

def build_student_collab_prompt(student_id: str, logs: Sequence[ResponseLog], max_chars: Optional[int] = None,
    templates: Optional[dict] = None) -> PromptPair:
    _check_student_logs(student_id, logs)
    tmpl = (templates or load_prompt_templates())['student_collab']
    key = tmpl['history_key']
    text = _render(lambda entries: {key: entries}, _student_entries(logs), max_chars)
    return PromptPair(tmpl['system'], text)

def build_exercise_collab_prompt(exercise_id: str, logs: Sequence[ResponseLog], max_chars: Optional[int] = None,
    templates: Optional[dict] = None) -> PromptPair:
    if len(logs) == 0:
        raise ContractError(f"Exercise `{exercise_id}` has no participants.")
    header = _exercise_header(exercise_id, logs)
    tmpl = (templates or load_prompt_templates())['exercise_collab']
    key = tmpl['history_key']
    text = _render(lambda entries: {**header, key: entries}, _exercise_entries(logs), max_chars)
    return PromptPair(tmpl['system'], text)

def build_diagnosis_prompt(kind: str, entity_id: str, collab: Optional[DiagnosisRecord], logs: Sequence[ResponseLog],
    use_collab: bool = True, max_chars: Optional[int] = None, templates: Optional[dict] = None) -> PromptPair:
    r"""Diagnosis prompt with the collaborative text as the profile field.

    With `use_collab=False` the profile field is left out and `collab` must be None.
    """
    check_kind(kind)
    if use_collab:
        if collab is None:
            raise ContractError(f"No collaborative record for {kind} `{entity_id}`.")
        if collab.stage != 'collab':
            raise ContractError(f"Expected a `collab` record for {kind} `{entity_id}`, got stage `{collab.stage}`.")
        if collab.kind != kind or collab.entity_id != entity_id:
            raise ContractError(f"The collaborative record belongs to {collab.kind} `{collab.entity_id}`, "
                f"not {kind} `{entity_id}`.")
        profile = {PROFILE_KEY: collab.text}
    else:
        if collab is not None:
            raise ContractError("A collaborative record was passed with use_collab=False.")
        profile = dict()

    tmpl = (templates or load_prompt_templates())[f'{kind}_diagnosis']
    key = tmpl['history_key']
    if kind == 'student':
        _check_student_logs(entity_id, logs)
        text = _render(lambda entries: {**profile, key: entries}, _student_entries(logs), max_chars)
    else:
        if len(logs) == 0:
            raise ContractError(f"Exercise `{entity_id}` has no participants.")
        header = _exercise_header(entity_id, logs)
        text = _render(lambda entries: {**header, **profile, key: entries}, _exercise_entries(logs), max_chars)
    return PromptPair(tmpl['system'], text)

def build_collab_prompt(kind: str, entity_id: str, logs: Sequence[ResponseLog], **kws) -> PromptPair:
    check_kind(kind)
    if kind == 'student':
        return build_student_collab_prompt(entity_id, logs, **kws)
    return build_exercise_collab_prompt(entity_id, logs, **kws)
