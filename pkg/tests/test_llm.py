import json
import itertools

import numpy as np
import pytest

from dataset import ResponseLog, split_dataset
from llm import (
    EndpointConfig, PromptPair, DiagnosisRecord, JsonlCache, chat_complete, parse_completion,
    build_student_collab_prompt, build_exercise_collab_prompt, build_diagnosis_prompt, build_collab_prompt,
    stub_diagnose, placeholder_record, concept_accuracy, concept_union, NO_HISTORY_TEXT,
    embed_text, stub_embed, char_trigrams, trigram_bucket,
    run_diagnosis, run_embedding, group_train_logs, final_diagnoses, read_diagnoses, write_diagnoses,
)
from utils.errors import ConfigError, ContractError, TransportError, ValidationError


def _remote(**kws):
    return EndpointConfig(base_url='http://localhost:9', offline=False, backoff=0.0, **kws)

def _student_logs(sid='s1'):
    return [
        ResponseLog(sid, 'e1', ('k1',), 1, 'loop exercise'),
        ResponseLog(sid, 'e2', ('k1', 'k2'), 0, 'nested loops'),
        ResponseLog(sid, 'e3', ('k2',), 1, None),
        ResponseLog(sid, 'e4', ('k3',), 0, 'recursion'),
    ]

def _exercise_logs(eid='e1'):
    return [ResponseLog(f"s{i}", eid, ('k1', 'k2'), i % 2, 'sum of a list') for i in range(3)]


class TestPrompts:
    def test_single_log_entry(self):
        prompt = build_student_collab_prompt('s1', [ResponseLog('s1', 'e1', ('loop',), 1, 'loop exercise')])
        payload = json.loads(prompt.input_prompt)
        assert payload == {'STUDY HISTORY': [{'content': 'loop exercise', 'concept': 'loop', 'answer': 1}]}

    def test_content_falls_back_to_exercise_id(self):
        payload = json.loads(build_student_collab_prompt('s1', _student_logs()).input_prompt)
        assert [e['content'] for e in payload['STUDY HISTORY']] == ['loop exercise', 'nested loops', 'e3', 'recursion']
        assert payload['STUDY HISTORY'][1]['concept'] == 'k1, k2'

    def test_student_without_history(self):
        with pytest.raises(ContractError):
            build_student_collab_prompt('s1', [])

    def test_logs_of_another_student(self):
        with pytest.raises(ContractError):
            build_student_collab_prompt('s2', _student_logs('s1'))

    def test_exercise_prompt_structure(self):
        payload = json.loads(build_exercise_collab_prompt('e1', _exercise_logs()).input_prompt)
        assert payload['content'] == 'sum of a list'
        assert payload['concepts'] == ['k1', 'k2']
        assert len(payload['RESPONSES']) == 3
        assert payload['RESPONSES'][0] == {'student': 's0', 'answer': 0}

    def test_exercise_header_unions_concept_tags(self):
        logs = [ResponseLog('s0', 'e1', ('k2',), 1, None), ResponseLog('s1', 'e1', ('k3', 'k1'), 0, 'sum of a list')]
        payload = json.loads(build_exercise_collab_prompt('e1', logs).input_prompt)
        assert payload['concepts'] == ['k1', 'k2', 'k3']
        assert payload['content'] == 'sum of a list'

    def test_exercise_without_participants(self):
        with pytest.raises(ContractError):
            build_exercise_collab_prompt('e1', [])

    def test_diagnosis_prompt_carries_profile(self):
        logs = _student_logs()
        collab = stub_diagnose('student', 's1', logs, stage='collab')
        prompt = build_diagnosis_prompt('student', 's1', collab, logs)
        payload = json.loads(prompt.input_prompt)
        assert payload['PROFILE'] == collab.text
        assert len(payload['STUDY HISTORY']) == 4
        assert '"reason"' in prompt.system_prompt and 'JSON' in prompt.system_prompt

    def test_exercise_diagnosis_prompt(self):
        logs = _exercise_logs()
        collab = stub_diagnose('exercise', 'e1', logs, stage='collab')
        payload = json.loads(build_diagnosis_prompt('exercise', 'e1', collab, logs).input_prompt)
        assert set(payload) == {'content', 'concepts', 'PROFILE', 'RESPONSES'}

    def test_diagnosis_prompt_needs_collab(self):
        with pytest.raises(ContractError):
            build_diagnosis_prompt('student', 's1', None, _student_logs())

    def test_diagnosis_prompt_rejects_foreign_collab(self):
        collab = stub_diagnose('student', 's9', _student_logs('s9'), stage='collab')
        with pytest.raises(ContractError):
            build_diagnosis_prompt('student', 's1', collab, _student_logs())

    def test_diagnosis_prompt_rejects_diagnosis_stage(self):
        record = stub_diagnose('student', 's1', _student_logs(), stage='diagnosis')
        with pytest.raises(ContractError):
            build_diagnosis_prompt('student', 's1', record, _student_logs())

    def test_without_collab_stage(self):
        payload = json.loads(build_diagnosis_prompt('student', 's1', None, _student_logs(), use_collab=False).input_prompt)
        assert 'PROFILE' not in payload

    def test_oldest_entries_are_dropped_first(self):
        logs = _student_logs()
        full = build_collab_prompt('student', 's1', logs)
        short = build_collab_prompt('student', 's1', logs, max_chars=len(full.input_prompt) - 1)
        entries = json.loads(short.input_prompt)['STUDY HISTORY']
        assert entries[-1]['content'] == 'recursion'
        assert len(entries) < 4
        tiny = build_collab_prompt('student', 's1', logs, max_chars=1)
        assert len(json.loads(tiny.input_prompt)['STUDY HISTORY']) == 1

    def test_digest_tracks_content(self):
        a = build_collab_prompt('student', 's1', _student_logs())
        b = build_collab_prompt('student', 's1', _student_logs())
        c = build_collab_prompt('student', 's1', _student_logs()[:2])
        assert a.digest == b.digest != c.digest

    def test_input_must_be_json(self):
        with pytest.raises(ContractError):
            PromptPair('system', 'not json')


class TestStub:
    def test_all_correct_student(self):
        logs = [ResponseLog('s1', f"e{i}", (k,), 1) for i, k in enumerate(['k2', 'k1', 'k2'])]
        record = stub_diagnose('student', 's1', logs)
        assert record.text == "mastered: k1 (1/1=1.00), k2 (2/2=1.00); weak: none"
        assert record.source == 'stub'

    def test_partial_accuracy(self):
        logs = [ResponseLog('s1', 'e1', ('k1',), 1), ResponseLog('s1', 'e2', ('k1',), 0), ResponseLog('s1', 'e3', ('k3',), 0)]
        text = stub_diagnose('student', 's1', logs).text
        assert 'k1 (1/2=0.50)' in text
        assert text.endswith('weak: k3 (0/1=0.00)')

    def test_deterministic(self):
        a = stub_diagnose('student', 's1', _student_logs())
        b = stub_diagnose('student', 's1', _student_logs())
        assert a == b

    def test_collab_stage(self):
        assert stub_diagnose('student', 's1', _student_logs(), stage='collab').text == \
            "answered 4 exercise(s) with overall accuracy 2/4=0.50"
        assert stub_diagnose('exercise', 'e1', _exercise_logs(), stage='collab').text == \
            "attempted by 3 student(s) with accuracy 1/3=0.33"

    def test_exercise_diagnosis(self):
        assert stub_diagnose('exercise', 'e1', _exercise_logs()).text == "examines: k1, k2; hard (1/3=0.33 correct)"

    def test_exercise_text_lists_every_concept(self):
        logs = [ResponseLog('s0', 'e1', ('k2',), 1), ResponseLog('s1', 'e1', ('k3', 'k1'), 0)]
        assert stub_diagnose('exercise', 'e1', logs).text == "examines: k1, k2, k3; easy (1/2=0.50 correct)"
        assert concept_union(logs) == ['k1', 'k2', 'k3']

    def test_concept_accuracy(self):
        assert list(concept_accuracy(_student_logs()).items()) == [('k1', (1, 2)), ('k2', (1, 2)), ('k3', (0, 1))]

    def test_no_logs(self):
        with pytest.raises(ContractError):
            stub_diagnose('student', 's1', [])
        assert placeholder_record('exercise', 'e7').text == NO_HISTORY_TEXT


class TestRecords:
    def test_empty_text(self):
        with pytest.raises(ValidationError):
            DiagnosisRecord('student', 's1', 'diagnosis', '  ', '', 'abc', 'stub')

    def test_write_and_read(self, tmp_path):
        records = [stub_diagnose('student', 's1', _student_logs()), placeholder_record('exercise', 'e1')]
        path = str(tmp_path / 'diagnoses.jsonl')
        write_diagnoses(records, path)
        assert read_diagnoses(path) == records

    def test_cache_persists(self, tmp_path):
        path = str(tmp_path / 'cache' / 'c.jsonl')
        cache = JsonlCache(path, key='digest')
        cache.put({'digest': 'a', 'vector': [1.0]})
        cache.put({'digest': 'a', 'vector': [2.0]})
        reloaded = JsonlCache(path, key='digest')
        assert 'a' in reloaded and len(reloaded) == 1
        assert reloaded.get('a')['vector'] == [2.0]


class TestEndpoint:
    def test_offline_without_endpoint(self):
        assert EndpointConfig.from_env(environ={}).offline

    def test_remote_from_environment(self):
        env = {'KCD_LLM_BASE_URL': 'http://localhost:8000/v1', 'OPENAI_API_KEY': 'k'}
        endpoint = EndpointConfig.from_env(environ=env)
        assert endpoint.mode == 'remote' and endpoint.api_key == 'k'

    def test_explicit_offline_wins(self):
        env = {'KCD_LLM_BASE_URL': 'http://localhost:8000/v1', 'KCD_LLM_OFFLINE': '1'}
        assert EndpointConfig.from_env(environ=env).offline

    def test_remote_needs_url(self):
        with pytest.raises(ConfigError):
            EndpointConfig(offline=False)

    def test_from_cfg(self, small_cfg):
        small_cfg.update({'llm_offline': True, 'llm_workers': 2})
        endpoint = EndpointConfig.from_cfg(small_cfg, environ={})
        assert endpoint.offline and endpoint.workers == 2 and endpoint.max_attempts == 3


class TestChatComplete:
    def test_cache_hit_sends_nothing(self, fake_openai, tmp_path):
        client = fake_openai()
        cache = JsonlCache(str(tmp_path / 'cache.jsonl'), key='prompt_digest')
        prompt = build_collab_prompt('student', 's1', _student_logs())
        first = chat_complete(_remote(), prompt, 'student', 's1', 'collab', cache=cache, client=client)
        second = chat_complete(_remote(), prompt, 'student', 's1', 'collab', cache=cache, client=client)
        assert client.chat_calls == 1
        assert first == second and first.source == 'remote'

    def test_offline_uses_stub(self, fake_openai):
        client = fake_openai()
        logs = _student_logs()
        prompt = build_collab_prompt('student', 's1', logs)
        record = chat_complete(EndpointConfig(), prompt, 'student', 's1', 'collab', logs=logs, client=client)
        assert client.chat_calls == 0
        assert record.source == 'stub'
        assert record.text == stub_diagnose('student', 's1', logs, stage='collab').text
        assert record.prompt_digest == prompt.digest

    def test_offline_needs_logs(self):
        prompt = build_collab_prompt('student', 's1', _student_logs())
        with pytest.raises(ContractError):
            chat_complete(EndpointConfig(), prompt, 'student', 's1', 'collab')

    def test_transient_failure_is_retried(self, fake_openai):
        client = fake_openai(failures=1)
        logs = _student_logs()
        collab = stub_diagnose('student', 's1', logs, stage='collab')
        prompt = build_diagnosis_prompt('student', 's1', collab, logs)
        record = chat_complete(_remote(), prompt, 'student', 's1', 'diagnosis', client=client)
        assert client.chat_calls == 2
        assert record.text == 'diagnosis #2' and record.reason == 'seen in the history'

    def test_exhausted_retries(self, fake_openai):
        client = fake_openai(failures=10)
        prompt = build_collab_prompt('student', 's1', _student_logs())
        with pytest.raises(TransportError):
            chat_complete(_remote(max_attempts=3), prompt, 'student', 's1', 'collab', client=client)
        assert client.chat_calls == 3

    def test_non_json_diagnosis_is_kept(self):
        assert parse_completion('plain words', 'diagnosis') == ('plain words', '')

    def test_fenced_json(self):
        content = '```json\n{"diagnosis": "good at loops", "reason": "4/4"}\n```'
        assert parse_completion(content, 'diagnosis') == ('good at loops', '4/4')

    def test_empty_completion(self):
        with pytest.raises(TransportError):
            parse_completion('   ', 'collab')


class TestEmbedding:
    def test_stub_is_normalized_and_deterministic(self):
        a = embed_text(EndpointConfig(embed_dim=64), 'mastered: k1 (2/2=1.00)')
        b = embed_text(EndpointConfig(embed_dim=64), 'mastered: k1 (2/2=1.00)')
        assert a.shape == (64,)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(a, b)

    def test_disjoint_trigrams_are_orthogonal(self):
        dim = 256
        texts = ['loops', 'arrays', 'recursion', 'graphs', 'strings', 'sorting', 'hashing', 'pointers']
        buckets = {t: {trigram_bucket(g, dim) for g in char_trigrams(t)} for t in texts}
        pair = next((a, b) for a, b in itertools.combinations(texts, 2) if not buckets[a] & buckets[b])
        cos = float(stub_embed(pair[0], dim) @ stub_embed(pair[1], dim))
        assert cos == 0.0

    def test_short_text(self):
        assert char_trigrams('ab') == ['ab']
        assert np.linalg.norm(stub_embed('ab', 8)) == pytest.approx(1.0)

    def test_empty_text(self):
        with pytest.raises(ContractError):
            embed_text(EndpointConfig(), '  ')

    def test_remote_is_cached_and_normalized(self, fake_openai, tmp_path):
        client = fake_openai()
        cache = JsonlCache(str(tmp_path / 'emb.jsonl'), key='digest')
        a = embed_text(_remote(), 'weak: k3', cache=cache, client=client)
        b = embed_text(_remote(), 'weak: k3', cache=cache, client=client)
        assert client.embed_calls == 1
        assert np.allclose(a, [1 / 3, 2 / 3, 2 / 3, 0.0])
        assert np.array_equal(a, b)

    def test_remote_zero_vector(self, fake_openai):
        client = fake_openai(vector=[0.0, 0.0])
        with pytest.raises(ValidationError):
            embed_text(_remote(), 'weak: k3', client=client)


class TestPipeline:
    def test_groups_only_train_logs(self, tiny_split):
        groups = group_train_logs(tiny_split, 'student')
        assert list(groups) == list(tiny_split.student_index)
        assert sum(len(v) for v in groups.values()) == len(tiny_split.train)

    def test_histories_follow_source_order(self):
        logs = [ResponseLog('s1', f"e{i}", ('k1',), i % 2, f"exercise {i}") for i in range(30)]
        history = group_train_logs(split_dataset(logs, seed=2), 'student')['s1']
        positions = [int(log.exercise_id[1:]) for log in history]
        assert positions == sorted(positions)

        full = build_collab_prompt('student', 's1', history)
        short = build_collab_prompt('student', 's1', history, max_chars=len(full.input_prompt) - 1)
        entries = json.loads(short.input_prompt)['STUDY HISTORY']
        assert 0 < len(entries) < len(history)
        # the earliest logs of the source file are the ones dropped
        assert [e['content'] for e in entries] == [f"exercise {p}" for p in positions[-len(entries):]]

    def test_offline_diagnosis(self, tiny_split, tmp_path):
        records = run_diagnosis(tiny_split, EndpointConfig(workers=3), cache_path=str(tmp_path / 'cache.jsonl'))
        final = final_diagnoses(records)
        assert set(final['student']) == set(tiny_split.student_index)
        assert set(final['exercise']) == set(tiny_split.exercise_index)
        kinds = [r.kind for r in records]
        assert kinds == sorted(kinds, key=lambda k: k != 'student')
        again = run_diagnosis(tiny_split, EndpointConfig(workers=1))
        assert records == again

    def test_without_collab_stage(self, tiny_split):
        records = run_diagnosis(tiny_split, EndpointConfig(), use_collab=False)
        assert {r.stage for r in records} == {'diagnosis'}

    def test_entity_without_train_logs(self, tiny_split):
        sid = next(iter(tiny_split.student_index))
        moved = [log for log in tiny_split.train if log.student_id != sid]
        split = tiny_split.replace_train(moved)
        records = run_diagnosis(split, EndpointConfig())
        s0 = [r for r in records if r.kind == 'student' and r.entity_id == sid]
        assert len(s0) == 1 and s0[0].text == NO_HISTORY_TEXT

    def test_remote_diagnosis_uses_cache(self, tiny_split, fake_openai, tmp_path):
        client = fake_openai()
        path = str(tmp_path / 'cache.jsonl')
        endpoint = _remote(workers=2)
        run_diagnosis(tiny_split, endpoint, cache_path=path, client=client)
        first = client.chat_calls
        assert first > 0
        run_diagnosis(tiny_split, endpoint, cache_path=path, client=client)
        assert client.chat_calls == first

    def test_embedding_tables(self, tiny_split):
        records = run_diagnosis(tiny_split, EndpointConfig())
        tables = run_embedding(records, tiny_split, EndpointConfig(embed_dim=32))
        assert tables['student'].ids == tuple(tiny_split.student_index)
        assert tables['exercise'].dim == 32
        assert tables['exercise'].source == 'offline-stub'

    def test_embedding_needs_every_diagnosis(self, tiny_split):
        eid = next(iter(tiny_split.exercise_index))
        records = [r for r in run_diagnosis(tiny_split, EndpointConfig()) if r.entity_id != eid]
        with pytest.raises(ValidationError):
            run_embedding(records, tiny_split, EndpointConfig())
