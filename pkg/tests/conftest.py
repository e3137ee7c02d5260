import os
import copy
import json
from types import SimpleNamespace

import pytest

from dataset import split_dataset, build_q_matrix
from dataset.synthetic import SyntheticSpec, generate_synthetic
from runner.global_cfg import DEFAULT_CFG


def pytest_collection_modifyitems(config, items):
    if os.environ.get('KCD_RUN_SLOW', '0') == '1':
        return
    skip_slow = pytest.mark.skip(reason="set KCD_RUN_SLOW=1 to run")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_data():
    spec = SyntheticSpec(num_students=20, num_exercises=10, num_concepts=4, logs_per_student=8, noise=0.1,
        seed=0, dim_sem=8, max_concepts=2)
    return generate_synthetic(spec)

@pytest.fixture
def tiny_split(tiny_data):
    return split_dataset(tiny_data.logs, ratios=(0.8, 0.1, 0.1), seed=42)

@pytest.fixture
def tiny_q(tiny_split):
    return build_q_matrix(tiny_split)

@pytest.fixture
def tiny_tables(tiny_data, tiny_split):
    return {
        'student': tiny_data.tables['student'].aligned_to(tiny_split.student_index),
        'exercise': tiny_data.tables['exercise'].aligned_to(tiny_split.exercise_index),
    }

@pytest.fixture
def small_cfg():
    """Defaults shrunk so that a full training run takes a few seconds."""
    cfg = copy.deepcopy(DEFAULT_CFG)
    cfg.update({
        'epochs': 3,
        'batch_size': 32,
        'ncd_hidden_dims': '8-4',
        'mirt_latent_dim': 3,
        'align_proj_hidden': 8,
        'align_topk': 3,
        'wandb_mode': 'disabled',
    })
    return cfg


class FakeOpenAI(object):
    """Stands in for `openai.OpenAI`: counts requests and fails the first `failures` of them."""
    def __init__(self, failures=0, content=None, vector=None):
        self.failures = failures
        self.content = content
        self.vector = vector
        self.chat_calls = 0
        self.embed_calls = 0
        self.chat = SimpleNamespace(completions=SimpleNamespace(create=self._create))
        self.embeddings = SimpleNamespace(create=self._embed)

    def _create(self, model, messages, temperature):
        self.chat_calls += 1
        if self.chat_calls <= self.failures:
            raise ConnectionError("503 service unavailable")
        content = self.content
        if content is None:
            content = json.dumps({'diagnosis': f"diagnosis #{self.chat_calls}", 'reason': 'seen in the history'})
        return SimpleNamespace(choices=[SimpleNamespace(message=SimpleNamespace(content=content))])

    def _embed(self, model, input):
        self.embed_calls += 1
        if self.embed_calls <= self.failures:
            raise ConnectionError("503 service unavailable")
        vector = self.vector if self.vector is not None else [1.0, 2.0, 2.0, 0.0]
        return SimpleNamespace(data=[SimpleNamespace(embedding=list(vector))])


@pytest.fixture
def fake_openai():
    return FakeOpenAI
