import numpy as np
import pytest

from dataset import ResponseLog, parse_response_logs, split_dataset, build_q_matrix, compute_frequency
from dataset import partition_cold_warm, dropout_train, save_dataset_dir, load_dataset_dir
from dataset.data_split import DatasetSplit, FrequencyTable, build_indices, check_cold_warm
from dataset.embedding_table import EmbeddingTable, topk_neighbors, read_embedding_tables, write_embedding_tables
from dataset.synthetic import SyntheticSpec, generate_synthetic
from utils.errors import ConfigError, ContractError, ParseError, ValidationError


def make_logs(n):
    return [ResponseLog(f"s{i % 7}", f"e{i % 5}", (f"k{i % 3}",), i % 2) for i in range(n)]

def _required(q, exercise_id):
    concepts = list(q.concept_index)
    return [concepts[k] for k in np.flatnonzero(q.row(exercise_id))]


class TestParse:
    def test_csv_line(self):
        logs = parse_response_logs("s1,e1,k1;k2,1,\n", fmt='csv')
        assert logs == [ResponseLog('s1', 'e1', ('k1', 'k2'), 1, None)]

    def test_ids_are_trimmed_and_header_skipped(self):
        text = "student_id,exercise_id,concepts,score,content\n s1 , e1 ,k1,0,loops\n"
        log = parse_response_logs(text)[0]
        assert (log.student_id, log.exercise_id, log.content) == ('s1', 'e1', 'loops')

    def test_empty_concepts(self):
        with pytest.raises(ValidationError):
            parse_response_logs("s1,e1,,1,\n", fmt='csv')

    def test_score_out_of_range(self):
        with pytest.raises(ValidationError):
            parse_response_logs("s1,e1,k1,2,\n", fmt='csv')

    def test_wrong_field_count_reports_line(self):
        with pytest.raises(ParseError) as e:
            parse_response_logs("s1,e1,k1,1,\ns2,e1,k1\n", fmt='csv')
        assert e.value.line_no == 2

    def test_jsonl(self):
        text = '{"student_id": "s1", "exercise_id": "e2", "concepts": ["k1", "k1", "k2"], "score": 0}\n'
        log = parse_response_logs(text)[0]
        assert log.concepts == ('k1', 'k2')
        assert log.correct == 0

    def test_jsonl_missing_key(self):
        with pytest.raises(ParseError):
            parse_response_logs('{"student_id": "s1", "concepts": ["k1"], "score": 1}\n', fmt='jsonl')


class TestSplit:
    @pytest.mark.parametrize('n, sizes', [(10, (8, 1, 1)), (100, (80, 10, 10)), (1000, (800, 100, 100))])
    def test_sizes(self, n, sizes):
        split = split_dataset(make_logs(n), ratios=(0.8, 0.1, 0.1), seed=0)
        assert (len(split.train), len(split.valid), len(split.test)) == sizes

    def test_deterministic(self):
        logs = make_logs(50)
        a = split_dataset(logs, seed=3)
        b = split_dataset(logs, seed=3)
        assert a.train == b.train and a.valid == b.valid and a.test == b.test

    def test_parts_keep_source_order(self):
        logs = [ResponseLog('s1', f"e{i}", ('k1',), i % 2) for i in range(40)]
        split = split_dataset(logs, seed=5)
        for part in [split.train, split.valid, split.test]:
            positions = [int(log.exercise_id[1:]) for log in part]
            assert positions == sorted(positions)
        assert sorted(split.all_logs(), key=lambda log: int(log.exercise_id[1:])) == logs

    def test_ratios_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            split_dataset(make_logs(10), ratios=(0.8, 0.1, 0.2))

    def test_too_few_logs(self):
        with pytest.raises(ContractError):
            split_dataset(make_logs(2))

    def test_indices_cover_all_logs(self):
        split = split_dataset(make_logs(30), seed=1)
        assert split.num_students == 7
        assert split.num_exercises == 5
        assert split.num_concepts == 3


class TestQMatrix:
    def test_union_of_concepts(self):
        logs = [
            ResponseLog('s1', 'e1', ('k1', 'k2'), 1),
            ResponseLog('s2', 'e1', ('k2', 'k3'), 0),
            ResponseLog('s3', 'e2', ('k1',), 1),
        ]
        split = split_dataset(logs, ratios=(1.0, 0.0, 0.0), seed=0)
        q = build_q_matrix(split)
        assert _required(q, 'e1') == ['k1', 'k2', 'k3']
        assert (q.matrix.sum(axis=1) > 0).all()

    def test_exercise_only_in_test(self):
        train = (ResponseLog('s1', 'e1', ('k1',), 1), ResponseLog('s2', 'e1', ('k1',), 0))
        test = (ResponseLog('s1', 'e9', ('k2',), 1),)
        split = DatasetSplit(train, (), test, *build_indices(train + test))
        q = build_q_matrix(split)
        assert _required(q, 'e9') == ['k2']


class TestFrequencyAndColdWarm:
    def test_counts_sum_to_train_size(self, tiny_split):
        freq = compute_frequency(tiny_split)
        assert freq.student_counts.sum() == freq.exercise_counts.sum() == len(tiny_split.train)

    def test_partition(self):
        ids = {'ea': 0, 'eb': 1, 'ec': 2}
        freq = FrequencyTable(np.array([18]), np.array([2, 11, 5]), {'s1': 0}, ids)
        test = [ResponseLog('s1', e, ('k1',), 1) for e in ['ea', 'eb', 'ec']]
        cold, warm = partition_cold_warm(test, freq)
        assert [log.exercise_id for log in cold] == ['ea']
        assert [log.exercise_id for log in warm] == ['eb']

    def test_overlapping_thresholds(self):
        check_cold_warm(3, 10)
        check_cold_warm(11, 10)
        with pytest.raises(ConfigError):
            check_cold_warm(12, 10)


class TestDropout:
    def test_half(self):
        train = make_logs(100)
        kept = dropout_train(train, 0.5, seed=0)
        assert len(kept) == 50
        pos = [train.index(log) for log in kept]
        # survivors keep their original order
        assert pos == sorted(pos)

    def test_zero_is_identity(self):
        train = make_logs(20)
        assert dropout_train(train, 0.0, seed=5) == train

    def test_seeded(self):
        train = make_logs(40)
        assert dropout_train(train, 0.3, seed=1) == dropout_train(train, 0.3, seed=1)

    def test_ratio_out_of_range(self):
        with pytest.raises(ConfigError):
            dropout_train(make_logs(10), 1.0)


class TestDatasetDir:
    def test_save_and_load(self, tiny_split, tiny_q, tmp_path):
        save_dataset_dir(str(tmp_path), tiny_split, tiny_q)
        split, q = load_dataset_dir(str(tmp_path))
        assert split.train == tiny_split.train
        assert split.student_index == tiny_split.student_index
        assert (q.matrix == tiny_q.matrix).all()


class TestEmbeddingTable:
    def test_rows_are_normalized(self):
        table = EmbeddingTable.from_rows('student', ['a', 'b'], [[3.0, 4.0], [0.0, 2.0]])
        assert np.allclose(table.matrix.numpy(), [[0.6, 0.8], [0.0, 1.0]])

    def test_zero_row(self):
        with pytest.raises(ValidationError):
            EmbeddingTable.from_rows('student', ['a', 'b'], [[1.0, 0.0], [0.0, 0.0]])

    def test_aligned_to_missing_id(self):
        table = EmbeddingTable.from_rows('exercise', ['e1'], [[1.0, 0.0]])
        with pytest.raises(ValidationError):
            table.aligned_to({'e1': 0, 'e2': 1})

    def test_jsonl_round_trip_with_duplicates(self, tmp_path):
        path = str(tmp_path / 'emb.jsonl')
        write_embedding_tables([EmbeddingTable.from_rows('student', ['a', 'b'], [[1.0, 0.0], [0.0, 1.0]])], path)
        assert read_embedding_tables(path)['student'].ids == ('a', 'b')
        with open(path, 'a') as f:
            f.write('{"kind": "student", "id": "a", "vector": [1.0, 1.0]}\n')
        with pytest.raises(ValidationError):
            read_embedding_tables(path)


class TestTopk:
    def test_duplicate_vectors_rank_first(self):
        table = EmbeddingTable.from_rows('student', ['a', 'b', 'c'], [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        index = topk_neighbors(table, k=1)
        assert index.of(0).tolist() == [1]
        assert index.of(1).tolist() == [0]

    def test_orthogonal_ties_by_index(self):
        table = EmbeddingTable.from_rows('exercise', [f"e{i}" for i in range(5)], np.eye(5))
        index = topk_neighbors(table, k=2)
        assert index.of(0).tolist() == [1, 2]
        assert index.of(1).tolist() == [0, 2]
        assert index.of(4).tolist() == [0, 1]
        assert index.of([4, 0]).tolist() == [[0, 1], [1, 2]]

    def test_k_is_capped(self):
        table = EmbeddingTable.from_rows('exercise', ['x', 'y', 'z'], np.eye(3))
        assert topk_neighbors(table, k=20).neighbors.shape == (3, 2)

    def test_needs_two_rows(self):
        table = EmbeddingTable.from_rows('exercise', ['x'], [[1.0]])
        with pytest.raises(ContractError):
            topk_neighbors(table, k=1)


class TestSynthetic:
    def test_log_count(self):
        data = generate_synthetic(SyntheticSpec(num_students=100, num_exercises=50, num_concepts=10,
            logs_per_student=20))
        assert len(data.logs) == 2000

    def test_seeded(self):
        spec = SyntheticSpec(num_students=10, num_exercises=8, num_concepts=3, logs_per_student=4, seed=7)
        assert generate_synthetic(spec).logs == generate_synthetic(spec).logs

    def test_noise_free_embeddings_are_linear_in_traits(self):
        spec = SyntheticSpec(num_students=100, num_exercises=50, num_concepts=10, logs_per_student=20,
            noise=0.0, dim_sem=32)
        data = generate_synthetic(spec)
        mat = data.tables['student'].matrix.numpy()
        assert mat.shape == (100, 32)
        assert np.linalg.matrix_rank(mat, tol=1e-8) == 10

    def test_responses_follow_the_model_probability(self):
        spec = SyntheticSpec(num_students=200, num_exercises=100, num_concepts=12, logs_per_student=100)
        data = generate_synthetic(spec)
        assert len(data.logs) == 20000
        r = np.asarray([log.correct for log in data.logs], dtype=np.float64)
        p = data.probs
        bins = np.minimum((p * 10).astype(int), 9)
        for b in range(10):
            sel = bins == b
            n = int(sel.sum())
            if n < 200:
                continue
            # 0.03, widened to four binomial standard deviations on thin bins
            tol = max(0.03, 4 * np.sqrt(0.25 / n))
            assert abs(r[sel].mean() - p[sel].mean()) <= tol

    def test_bad_spec(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(num_students=0)
