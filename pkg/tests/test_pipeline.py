import copy
import json
import math

import numpy as np
import pytest
import torch
from scipy.stats import spearmanr

from dataset import split_dataset, build_q_matrix, compute_frequency, dropout_train
from dataset.data_split import FrequencyTable
from dataset.synthetic import SyntheticSpec, generate_synthetic
from eval import auc, compute_metrics, CD_Evaluator
from model.cdm import predict_ncd
from runner import BaseHandler, KCDHandler, load_handler, restore_from_checkpoint, predict_logs
from runner import evaluate_cold_warm, dropout_sweep, export_embeddings
from runner.global_cfg import DEFAULT_CFG
from utils.errors import CheckpointError, ConfigError, ContractError, UndefinedMetricError
from utils.func import parse_str_dims, derive_seed


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = 0.0
    for p in pos:
        for n in neg:
            credit += 1.0 if p > n else (0.5 if p == n else 0.0)
    return credit / (len(pos) * len(neg))

def _random_labels(rng, n):
    labels = rng.randint(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    return labels


class TestAUC:
    def test_worked_example(self):
        assert auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == 0.75

    def test_separated_and_tied(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
        assert auc([0.4] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    @pytest.mark.parametrize('ties', [False, True])
    def test_matches_pairwise_counting(self, ties):
        rng = np.random.RandomState(0)
        for _ in range(100):
            n = rng.randint(2, 40)
            labels = _random_labels(rng, n)
            scores = rng.randint(0, 5, size=n) / 4.0 if ties else rng.rand(n)
            assert auc(scores, labels) == pairwise_auc(scores.tolist(), labels.tolist())

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.2, 0.9], [1, 1])


class TestComputeMetrics:
    def test_accuracy(self):
        assert compute_metrics([0.6, 0.4], [1, 0]).acc == 1.0

    def test_rmse(self):
        assert compute_metrics([1.0, 0.0], [0, 1]).rmse == 1.0

    def test_three_logs(self):
        m = compute_metrics([0.9, 0.2, 0.6], [1, 0, 0])
        assert m.acc == pytest.approx(2 / 3, abs=1e-12)
        assert m.rmse == pytest.approx(math.sqrt((0.01 + 0.04 + 0.36) / 3), abs=1e-12)
        assert m.auc == 1.0 and m.n == 3

    def test_permutation_invariant(self):
        rng = np.random.RandomState(3)
        scores, labels = rng.rand(50), _random_labels(rng, 50)
        perm = rng.permutation(50)
        a, b = compute_metrics(scores, labels), compute_metrics(scores[perm], labels[perm])
        assert a.auc == b.auc and a.acc == b.acc
        assert a.rmse == pytest.approx(b.rmse, abs=1e-12)

    def test_empty(self):
        with pytest.raises(ContractError):
            compute_metrics([], [])

    def test_undefined_auc_is_nan_when_allowed(self):
        m = compute_metrics([0.3, 0.8], [0, 0], allow_undefined_auc=True, subset='cold')
        assert math.isnan(m.auc) and m.acc == 0.5

    def test_evaluator(self):
        res = CD_Evaluator().compute({'y': torch.tensor([1.0, 0.0, 1.0, 0.0]),
            'y_hat': torch.tensor([0.9, 0.8, 0.7, 0.1], dtype=torch.float64)}, ['auc', 'acc', 'rmse', 'loss'])
        assert res['auc'] == 0.75 and res['acc'] == 0.75
        assert res['loss'] > 0


def _train(cfg, split, q, tables=None, out_dir=None, handler_cls=None):
    handler = (handler_cls or load_handler)(cfg, split, q, tables=tables, out_dir=out_dir)
    res = handler.exec(save=out_dir is not None)
    return handler, res

def _same_state(a, b):
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


class TestTraining:
    @pytest.mark.parametrize('align', ['none', 'beh', 'sem'])
    def test_two_runs_are_identical(self, small_cfg, tiny_split, tiny_q, tiny_tables, align):
        small_cfg['align'] = align
        h1, r1 = _train(copy.deepcopy(small_cfg), tiny_split, tiny_q, tables=tiny_tables)
        h2, r2 = _train(copy.deepcopy(small_cfg), tiny_split, tiny_q, tables=tiny_tables)
        assert r1['history'] == r2['history']
        assert _same_state(h1.get_state_dict(), h2.get_state_dict())

    def test_no_alignment_matches_base_model(self, small_cfg, tiny_split, tiny_q, tiny_tables):
        h1, r1 = _train(copy.deepcopy(small_cfg), tiny_split, tiny_q, handler_cls=BaseHandler)
        h2, r2 = _train(copy.deepcopy(small_cfg), tiny_split, tiny_q, tables=tiny_tables, handler_cls=KCDHandler)
        assert r1['history'] == r2['history']
        assert _same_state(h1.get_state_dict(), h2.get_state_dict())

    def test_base_handler_rejects_alignment(self, small_cfg, tiny_split, tiny_q, tiny_tables):
        small_cfg['align'] = 'beh'
        with pytest.raises(ConfigError):
            BaseHandler(small_cfg, tiny_split, tiny_q, tables=tiny_tables)

    def test_alignment_needs_tables(self, small_cfg, tiny_split, tiny_q):
        small_cfg['align'] = 'sem'
        with pytest.raises(ConfigError):
            load_handler(small_cfg, tiny_split, tiny_q)

    def test_train_loss_decreases(self, small_cfg):
        data = generate_synthetic(SyntheticSpec(num_students=50, num_exercises=30, num_concepts=6,
            logs_per_student=10, seed=1))
        split = split_dataset(data.logs, seed=1)
        small_cfg.update({'epochs': 30, 'es_patience': 100, 'ncd_hidden_dims': '16-8', 'opt_lr': 0.01})
        _, res = _train(small_cfg, split, build_q_matrix(split))
        losses = [h['train_loss'] for h in res['history']]
        assert len(losses) == 30
        assert losses[-1] < losses[0]

    def test_history_fields(self, small_cfg, tiny_split, tiny_q):
        _, res = _train(small_cfg, tiny_split, tiny_q)
        assert [h['epoch'] for h in res['history']] == [1, 2, 3]
        assert set(res['history'][0]) == {'epoch', 'train_loss', 'valid_auc'}
        assert res['best_epoch'] in [1, 2, 3]

    def test_without_validation_logs(self, small_cfg, tiny_data):
        split = split_dataset(tiny_data.logs, ratios=(0.9, 0.0, 0.1), seed=0)
        _, res = _train(small_cfg, split, build_q_matrix(split))
        assert res['best_epoch'] == 3 and res['valid_auc'] is None


class TestCheckpoint:
    @pytest.mark.parametrize('model, align', [('IRT', 'none'), ('DINA', 'none'), ('NCD', 'beh'), ('MIRT', 'sem')])
    def test_restore_gives_same_predictions(self, small_cfg, tiny_split, tiny_q, tiny_tables, tmp_path, model, align):
        small_cfg.update({'model': model, 'align': align})
        handler, res = _train(small_cfg, tiny_split, tiny_q, tables=tiny_tables, out_dir=str(tmp_path))
        header, net, projs = restore_from_checkpoint(res['checkpoint'], tiny_split)
        assert header['model'] == model and header['align'] == align
        assert (projs is None) == (align == 'none')
        logs = list(tiny_split.test)
        assert np.array_equal(predict_logs(net, logs, tiny_split), predict_logs(handler.net, logs, tiny_split))

    def test_dataset_mismatch(self, small_cfg, tiny_split, tiny_q, tmp_path):
        _, res = _train(small_cfg, tiny_split, tiny_q, out_dir=str(tmp_path))
        other = generate_synthetic(SyntheticSpec(num_students=21, num_exercises=10, num_concepts=4,
            logs_per_student=8, seed=5, max_concepts=2))
        with pytest.raises(CheckpointError):
            restore_from_checkpoint(res['checkpoint'], split_dataset(other.logs, seed=0))

    def test_corrupted_file(self, tmp_path):
        path = tmp_path / 'checkpoint.json'
        path.write_text('{"version": 1, "params"')
        with pytest.raises(CheckpointError):
            restore_from_checkpoint(str(path))

    @pytest.mark.parametrize('doc', [
        {'version': 1, 'header': {'model': 'IRT'}},
        {'version': 1, 'params': {}},
        {'version': 1, 'header': {}, 'params': {'theta.weight': {'values': [0.1]}}},
        {'version': 1, 'header': {}, 'params': {'theta.weight': {'shape': [1], 'values': ['x']}}},
    ])
    def test_incomplete_document(self, tmp_path, doc):
        path = tmp_path / 'checkpoint.json'
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError):
            restore_from_checkpoint(str(path))


class TestExperiments:
    def test_cold_warm_partition(self, small_cfg, tiny_split, tiny_q):
        handler, _ = _train(small_cfg, tiny_split, tiny_q)
        rows = evaluate_cold_warm(handler.net, tiny_split, compute_frequency(tiny_split))
        by_subset = {r.subset: r for r in rows}
        assert by_subset['all'].n == len(tiny_split.test)
        parts = sum(by_subset[s].n for s in ['cold', 'warm'] if s in by_subset)
        assert parts <= by_subset['all'].n

    def test_no_cold_row_for_frequent_exercises(self, small_cfg, tiny_split, tiny_q):
        handler, _ = _train(small_cfg, tiny_split, tiny_q)
        freq = FrequencyTable(np.full(tiny_split.num_students, 20), np.full(tiny_split.num_exercises, 11),
            tiny_split.student_index, tiny_split.exercise_index)
        rows = evaluate_cold_warm(handler.net, tiny_split, freq)
        assert [r.subset for r in rows] == ['all', 'warm']

    def test_default_sweep_ratios(self):
        assert parse_str_dims(DEFAULT_CFG['sweep_ratios'], dtype=float) == [0.1, 0.2, 0.3, 0.4, 0.5]

    def test_sweep_rows(self, small_cfg, tiny_split, tiny_q):
        small_cfg['epochs'] = 1
        df = dropout_sweep(small_cfg, tiny_split, tiny_q, ratios=[0.0, 0.5], seeds=[0, 1])
        assert list(df.columns) == ['ratio', 'seed', 'auc', 'acc', 'rmse']
        assert len(df) == 4
        assert df[['ratio', 'seed']].values.tolist() == [[0.0, 0], [0.0, 1], [0.5, 0], [0.5, 1]]

    def test_sweep_ratio_range(self, small_cfg, tiny_split, tiny_q):
        with pytest.raises(ConfigError):
            dropout_sweep(small_cfg, tiny_split, tiny_q, ratios=[1.0], seeds=[0])

    def test_sweep_thins_with_a_derived_seed(self, small_cfg, tiny_split, tiny_q):
        small_cfg['epochs'] = 2
        df = dropout_sweep(small_cfg, tiny_split, tiny_q, ratios=[0.3], seeds=[3])

        cfg = copy.deepcopy(small_cfg)
        cfg['seed'] = 3
        cell_split = tiny_split.replace_train(dropout_train(tiny_split.train, 0.3, seed=derive_seed(3)))
        handler, _ = _train(cfg, cell_split, tiny_q)
        labels = np.asarray([log.correct for log in cell_split.test], dtype=np.float64)
        m = compute_metrics(predict_logs(handler.net, cell_split.test, cell_split), labels, allow_undefined_auc=True)
        assert df['rmse'].iloc[0] == m.rmse
        assert derive_seed(3) != 3
        assert dropout_train(tiny_split.train, 0.3, seed=derive_seed(3)) != dropout_train(tiny_split.train, 0.3, seed=3)

    def test_export(self, small_cfg, tiny_split, tiny_q, tiny_tables, tmp_path):
        small_cfg['align'] = 'beh'
        _, res = _train(small_cfg, tiny_split, tiny_q, tables=tiny_tables, out_dir=str(tmp_path))
        header, net, projs = restore_from_checkpoint(res['checkpoint'], tiny_split)
        records = export_embeddings(net, projs, header, tiny_split, tables=tiny_tables)
        assert len(records) == tiny_split.num_students + tiny_split.num_exercises
        for r in records:
            assert len(r['semantic_projected']) == len(r['behavioral']) == header['dims_beh'][r['kind']]

    def test_export_without_tables(self, small_cfg, tiny_split, tiny_q, tmp_path):
        _, res = _train(small_cfg, tiny_split, tiny_q, out_dir=str(tmp_path))
        header, net, projs = restore_from_checkpoint(res['checkpoint'], tiny_split)
        records = export_embeddings(net, projs, header, tiny_split)
        assert all(r['semantic_projected'] is None for r in records)


def _standard_split(seed=0):
    data = generate_synthetic(SyntheticSpec(seed=seed))
    split = split_dataset(data.logs, seed=seed)
    tables = {kind: data.tables[kind].aligned_to(split.student_index if kind == 'student' else split.exercise_index)
        for kind in ['student', 'exercise']}
    return split, build_q_matrix(split), tables

def _check_ncd_monotone(net, split, q):
    layers = net.pred_net
    qm = q.to_tensor()
    for j in range(min(split.num_exercises, 10)):
        d, disc, q_row = net.k_difficulty.weight[j], net.e_discrimination.weight[j], qm[j]
        base = net.student_emb.weight[j % split.num_students].detach().clone()
        for k in torch.nonzero(q_row).reshape(-1).tolist():
            ps = []
            for v in np.linspace(-3.0, 3.0, 20):
                h = base.clone()
                h[k] = float(v)
                ps.append(predict_ncd(h, d, disc, q_row, layers).item())
            assert all(b - a >= -1e-12 for a, b in zip(ps, ps[1:]))


class TestNCDAfterTraining:
    @torch.no_grad()
    def _check(self, handler):
        _check_ncd_monotone(handler.net, handler.split, handler.q)

    def test_monotone_on_small_data(self, small_cfg, tiny_split, tiny_q):
        small_cfg['epochs'] = 10
        handler, _ = _train(small_cfg, tiny_split, tiny_q)
        self._check(handler)

    @pytest.mark.slow
    def test_monotone_on_standard_data(self):
        split, q, _ = _standard_split()
        cfg = copy.deepcopy(DEFAULT_CFG)
        cfg.update({'epochs': 30, 'es_patience': 100})
        handler, _ = _train(cfg, split, q)
        self._check(handler)

    @pytest.mark.slow
    def test_learns_as_well_as_irt(self):
        split, q, _ = _standard_split()
        test_auc = {}
        for model in ['IRT', 'NCD']:
            cfg = copy.deepcopy(DEFAULT_CFG)
            cfg['model'] = model
            handler, _ = _train(cfg, split, q)
            labels = np.asarray([log.correct for log in split.test], dtype=np.float64)
            test_auc[model] = auc(predict_logs(handler.net, split.test, split), labels)
        assert test_auc['NCD'] > 0.55
        assert test_auc['NCD'] >= test_auc['IRT'] - 0.05


@pytest.mark.slow
class TestSyntheticBenefit:
    def test_cold_start(self):
        cold = {'none': [], 'beh': [], 'sem': []}
        full = {'none': [], 'beh': [], 'sem': []}
        for seed in range(5):
            split, q, tables = _standard_split(seed)
            freq = compute_frequency(split)
            for align in cold:
                cfg = copy.deepcopy(DEFAULT_CFG)
                cfg.update({'align': align, 'seed': seed})
                handler, _ = _train(cfg, split, q, tables=tables)
                rows = {r.subset: r for r in evaluate_cold_warm(handler.net, split, freq)}
                cold[align].append(rows['cold'].auc if 'cold' in rows else float('nan'))
                full[align].append(rows['all'].auc)
        mean = lambda xs: float(np.nanmean(xs))
        assert mean(cold['beh']) >= mean(cold['none']) + 0.01
        assert mean(cold['sem']) >= mean(cold['none'])
        for align in ['beh', 'sem']:
            assert mean(full[align]) >= mean(full['none']) - 0.005

    @pytest.mark.parametrize('align', ['none', 'beh'])
    def test_dropout_trend(self, align):
        split, q, tables = _standard_split()
        cfg = copy.deepcopy(DEFAULT_CFG)
        cfg['align'] = align
        df = dropout_sweep(cfg, split, q, tables=tables)
        means = df.groupby('ratio')['auc'].mean()
        rho, _ = spearmanr(means.index.values, means.values)
        assert rho <= 0
