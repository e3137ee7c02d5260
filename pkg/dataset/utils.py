import os.path as osp
from typing import Sequence

import pandas as pd

from utils.errors import ValidationError
from utils.io import ensure_dir, read_json, write_json
from .response_log import ResponseLog, read_response_logs, write_response_logs
from .data_split import DatasetSplit, QMatrix, build_q_matrix, split_dataset
from .LogTriplet import LogTripletDataset


SUBSETS = ['train', 'valid', 'test']


def prepare_cd_dataset(logs: Sequence[ResponseLog], split: DatasetSplit, name: str = 'train'):
    """
    Interface for preparing a cognitive diagnosis dataset over one subset of logs.
    """
    return LogTripletDataset(logs, split, name=name)

def ingest_logs(path_logs: str, cfg):
    """Read raw logs, split them, and derive the Q-matrix."""
    logs = read_response_logs(path_logs, fmt=cfg['log_format'])
    ratios = (cfg['split_train'], cfg['split_valid'], cfg['split_test'])
    split = split_dataset(logs, ratios=ratios, seed=cfg['split_seed'])
    return split, build_q_matrix(split)

def save_dataset_dir(path: str, split: DatasetSplit, q: QMatrix):
    r"""Write a dataset directory: train/valid/test.jsonl, index.json and q_matrix.csv."""
    ensure_dir(path)
    outputs = []
    for name in SUBSETS:
        p = osp.join(path, f'{name}.jsonl')
        write_response_logs(list(split.subset(name)), p, fmt='jsonl')
        outputs.append(p)
    p = osp.join(path, 'index.json')
    write_json(p, {
        'students': list(split.student_index.keys()),
        'exercises': list(split.exercise_index.keys()),
        'concepts': list(split.concept_index.keys()),
    })
    outputs.append(p)
    p = osp.join(path, 'q_matrix.csv')
    df = pd.DataFrame(q.matrix, index=list(q.exercise_index.keys()), columns=list(q.concept_index.keys()))
    df.index.name = 'exercise_id'
    df.to_csv(p)
    outputs.append(p)
    print(f"[dataset] saved dataset directory to {path}.")
    return outputs

def load_dataset_dir(path: str):
    r"""Read a dataset directory written by `save_dataset_dir`.

    Returns:
        (DatasetSplit, QMatrix)
    """
    subsets = {name: tuple(read_response_logs(osp.join(path, f'{name}.jsonl'), fmt='jsonl')) for name in SUBSETS}
    index = read_json(osp.join(path, 'index.json'))
    to_index = lambda ids: {x: i for i, x in enumerate(ids)}
    split = DatasetSplit(subsets['train'], subsets['valid'], subsets['test'],
        to_index(index['students']), to_index(index['exercises']), to_index(index['concepts']))
    for log in split.all_logs():
        if log.student_id not in split.student_index or log.exercise_id not in split.exercise_index:
            raise ValidationError(f"{path}: log ({log.student_id}, {log.exercise_id}) is missing from index.json.")
        if any(k not in split.concept_index for k in log.concepts):
            raise ValidationError(f"{path}: a concept of exercise {log.exercise_id} is missing from index.json.")
    split.summary()
    return split, build_q_matrix(split)
