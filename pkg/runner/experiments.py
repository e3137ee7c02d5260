"""
Experiments on trained models: cold/warm evaluation, the training-log dropout
sweep and the embedding export.
"""
import copy
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch

from dataset.data_split import DatasetSplit, QMatrix, FrequencyTable, partition_cold_warm, dropout_train
from dataset.embedding_table import ENTITY_KINDS
from dataset.response_log import ResponseLog
from eval.metrics import Metrics, compute_metrics
from model.utils import load_model, load_projections
from utils.errors import CheckpointError, ConfigError
from utils.func import parse_str_dims, derive_seed
from utils.io import load_checkpoint
from .base_handler import BaseHandler
from .kcd_handler import KCDHandler


def load_handler(cfg, split, q, tables=None, out_dir=None):
    if cfg['align'] == 'none':
        return BaseHandler(cfg, split, q, tables=tables, out_dir=out_dir)
    return KCDHandler(cfg, split, q, tables=tables, out_dir=out_dir)

def check_checkpoint_split(header: dict, split: DatasetSplit):
    sizes = (split.num_students, split.num_exercises, split.num_concepts)
    saved = (header['num_students'], header['num_exercises'], header['num_concepts'])
    if sizes != saved:
        raise CheckpointError(f"The checkpoint was trained on {saved} students/exercises/concepts, "
            f"but the dataset has {sizes}.")

def restore_from_checkpoint(path: str, split: Optional[DatasetSplit] = None):
    r"""Rebuild the model (and projections, if any) saved in a checkpoint.

    Returns:
        (header, net, projs): projs is None for checkpoints trained without alignment.
    """
    header, state = load_checkpoint(path)
    if split is not None:
        check_checkpoint_split(header, split)
    net = load_model(header['model'], header['num_students'], header['num_exercises'], header['num_concepts'],
        q_matrix=state.get('q_matrix', None), **header.get('model_kws', {}))
    net_state = OrderedDict((k, v) for k, v in state.items() if not k.startswith('proj.'))
    try:
        net.load_state_dict(net_state, strict=True)
        projs = None
        if header['align'] != 'none':
            hidden = header['align_config']['proj_hidden']
            projs = load_projections(header['align'], header['dims_beh'], header['dim_sem'], hidden_dim=hidden)
            projs.load_state_dict(OrderedDict((k[len('proj.'):], v) for k, v in state.items() if k.startswith('proj.')),
                strict=True)
    except (RuntimeError, KeyError) as e:
        raise CheckpointError(f"{path} does not match its header: {e}")
    net.eval()
    print(f"[setup] restored {header['model']} (align = {header['align']}) from {path}, epoch {header.get('epoch')}.")
    return header, net, projs

@torch.no_grad()
def predict_logs(net, logs: Sequence[ResponseLog], split: DatasetSplit) -> np.ndarray:
    if len(logs) == 0:
        return np.zeros(0, dtype=np.float64)
    stu = torch.tensor([split.student_index[log.student_id] for log in logs], dtype=torch.long)
    exer = torch.tensor([split.exercise_index[log.exercise_id] for log in logs], dtype=torch.long)
    net.eval()
    return net(stu, exer).detach().cpu().numpy().astype(np.float64)

def evaluate_cold_warm(net, split: DatasetSplit, freq: FrequencyTable, cold_lt: int = 3, warm_gt: int = 10,
    threshold: float = 0.5) -> List[Metrics]:
    r"""Metrics on the whole test split and on its cold and warm parts.

    A part without test logs is absent from the result.
    """
    test = list(split.test)
    cold, warm = partition_cold_warm(test, freq, cold_lt=cold_lt, warm_gt=warm_gt)
    rows = []
    for subset, logs in [('all', test), ('cold', cold), ('warm', warm)]:
        if len(logs) == 0:
            print(f"[eval] the {subset} subset is empty; not reported.")
            continue
        scores = predict_logs(net, logs, split)
        labels = np.asarray([log.correct for log in logs], dtype=np.float64)
        rows.append(compute_metrics(scores, labels, threshold=threshold, subset=subset, allow_undefined_auc=True))
    for r in rows:
        print(f"[eval] {r.subset}: auc={r.auc:.6f}, acc={r.acc:.6f}, rmse={r.rmse:.6f}, n={r.n}")
    return rows

def dropout_sweep(cfg, split: DatasetSplit, q: QMatrix, tables=None, ratios: Optional[Sequence[float]] = None,
    seeds: Optional[Sequence[int]] = None) -> pd.DataFrame:
    r"""Retrain from scratch on thinned training logs, for every (ratio, seed).

    `seed` drives model initialization and shuffling; the thinning uses
    `derive_seed(seed)`.

    Only the model retrains; semantic tables stay fixed inputs.

    Returns:
        DataFrame with columns ratio, seed, auc, acc, rmse (full test split).
    """
    ratios = parse_str_dims(cfg['sweep_ratios'], dtype=float) if ratios is None else list(ratios)
    seeds = parse_str_dims(cfg['sweep_seeds'], dtype=int) if seeds is None else list(seeds)
    for r in ratios:
        if not 0.0 <= r < 1.0:
            raise ConfigError(f"Dropout ratios must be in [0, 1), got {r}.")
    rows = []
    for ratio in ratios:
        for seed in seeds:
            print(f"[sweep] ratio = {ratio}, seed = {seed}.")
            cell_cfg = copy.deepcopy(cfg)
            cell_cfg['seed'] = int(seed)
            # thinning and initialization draw from separate streams
            cell_split = split.replace_train(dropout_train(split.train, ratio, seed=derive_seed(int(seed))))
            handler = load_handler(cell_cfg, cell_split, q, tables=tables, out_dir=None)
            handler.exec(save=False)
            scores = predict_logs(handler.net, cell_split.test, cell_split)
            labels = np.asarray([log.correct for log in cell_split.test], dtype=np.float64)
            m = compute_metrics(scores, labels, threshold=cfg['threshold'], allow_undefined_auc=True)
            rows.append({'ratio': float(ratio), 'seed': int(seed), 'auc': m.auc, 'acc': m.acc, 'rmse': m.rmse})
    return pd.DataFrame(rows, columns=['ratio', 'seed', 'auc', 'acc', 'rmse'])

@torch.no_grad()
def export_embeddings(net, projs, header: dict, split: DatasetSplit, tables: Optional[Dict] = None) -> List[dict]:
    r"""Behavioral embeddings of every entity, next to their semantic counterpart.

    `semantic_projected` is the semantic row mapped into the behavioral space
    for `beh` checkpoints, the raw semantic row otherwise, and None without tables.
    """
    if tables is None:
        print("[warning] no semantic embeddings were given; `semantic_projected` is left empty.")
    records = []
    for kind in ENTITY_KINDS:
        index = split.student_index if kind == 'student' else split.exercise_index
        ids = sorted(index, key=lambda k: index[k])
        beh = net.entity_embedding(kind).detach().cpu()
        sem = None
        if tables is not None:
            sem = tables[kind].matrix
            if header['align'] == 'beh':
                sem = projs[kind](sem)
        for i, eid in enumerate(ids):
            records.append({
                'kind': kind,
                'id': eid,
                'behavioral': beh[i].tolist(),
                'semantic_projected': None if sem is None else sem[i].tolist(),
            })
    return records
