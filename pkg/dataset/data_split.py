"""
Train/valid/test splitting, dense indexing, Q-matrix, interaction frequencies,
cold/warm partitioning and training-set dropout.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch

from utils.errors import ConfigError, ContractError
from .response_log import ResponseLog


RATIO_TOL = 1e-9


def first_appearance_index(ids: Sequence[str]) -> Dict[str, int]:
    index = dict()
    for x in ids:
        if x not in index:
            index[x] = len(index)
    return index


@dataclass(frozen=True)
class DatasetSplit:
    train: Tuple[ResponseLog, ...]
    valid: Tuple[ResponseLog, ...]
    test: Tuple[ResponseLog, ...]
    student_index: Dict[str, int]
    exercise_index: Dict[str, int]
    concept_index: Dict[str, int]

    @property
    def num_students(self):
        return len(self.student_index)

    @property
    def num_exercises(self):
        return len(self.exercise_index)

    @property
    def num_concepts(self):
        return len(self.concept_index)

    def subset(self, name: str) -> Tuple[ResponseLog, ...]:
        assert name in ['train', 'valid', 'test'], f"Unknown subset {name}."
        return getattr(self, name)

    def all_logs(self) -> Tuple[ResponseLog, ...]:
        return self.train + self.valid + self.test

    def replace_train(self, train: Sequence[ResponseLog]) -> "DatasetSplit":
        """A copy with a different training list and the same indices."""
        return DatasetSplit(tuple(train), self.valid, self.test,
            self.student_index, self.exercise_index, self.concept_index)

    def summary(self):
        print(f"[dataset] split: train={len(self.train)}, valid={len(self.valid)}, test={len(self.test)}; "
              f"students={self.num_students}, exercises={self.num_exercises}, concepts={self.num_concepts}.")


def build_indices(logs: Sequence[ResponseLog]):
    student_index = first_appearance_index([log.student_id for log in logs])
    exercise_index = first_appearance_index([log.exercise_id for log in logs])
    concept_index = first_appearance_index([k for log in logs for k in log.concepts])
    return student_index, exercise_index, concept_index

def check_ratios(ratios) -> Tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ConfigError(f"Expected three split ratios, got {len(ratios)}.")
    if any(r < 0 for r in ratios):
        raise ConfigError(f"Split ratios must be non-negative, got {ratios}.")
    if abs(sum(ratios) - 1.0) > RATIO_TOL:
        raise ConfigError(f"Split ratios must sum to 1, got {ratios} (sum {sum(ratios)}).")
    return ratios

def split_dataset(logs: Sequence[ResponseLog], ratios=(0.8, 0.1, 0.1), seed: int = 42) -> DatasetSplit:
    r"""Shuffle logs with a seeded generator and cut them into train/valid/test.

    Membership is decided by the shuffle; within a part the logs keep their source order.

    valid and test take floor(ratio * N) logs each; train takes the remainder.
    Indices cover all logs, so entities seen only in valid/test still get dense ids.
    """
    ratios = check_ratios(ratios)
    logs = list(logs)
    N = len(logs)
    if N < 3:
        raise ContractError(f"At least 3 logs are needed to split, got {N}.")

    n_valid = int(math.floor(ratios[1] * N + RATIO_TOL))
    n_test = int(math.floor(ratios[2] * N + RATIO_TOL))
    n_train = N - n_valid - n_test

    perm = np.random.RandomState(seed).permutation(N)
    # each part keeps the source order, so per-entity histories stay oldest first
    train = tuple(logs[i] for i in np.sort(perm[:n_train]))
    valid = tuple(logs[i] for i in np.sort(perm[n_train:n_train + n_valid]))
    test = tuple(logs[i] for i in np.sort(perm[n_train + n_valid:]))

    split = DatasetSplit(train, valid, test, *build_indices(logs))
    split.summary()
    return split


@dataclass(frozen=True)
class QMatrix:
    matrix: np.ndarray
    exercise_index: Dict[str, int]
    concept_index: Dict[str, int]

    @property
    def shape(self):
        return self.matrix.shape

    def row(self, exercise_id: str) -> np.ndarray:
        return self.matrix[self.exercise_index[exercise_id]]

    def to_tensor(self) -> torch.Tensor:
        return torch.as_tensor(self.matrix, dtype=torch.float64)


def build_q_matrix(split: DatasetSplit) -> QMatrix:
    """Exercise-to-concept incidence, unioned over every split."""
    matrix = np.zeros((split.num_exercises, split.num_concepts), dtype=np.int64)
    for log in split.all_logs():
        j = split.exercise_index[log.exercise_id]
        for k in log.concepts:
            matrix[j, split.concept_index[k]] = 1
    assert (matrix.sum(axis=1) > 0).all(), "Found an exercise without any concept."
    return QMatrix(matrix, split.exercise_index, split.concept_index)


@dataclass(frozen=True)
class FrequencyTable:
    student_counts: np.ndarray
    exercise_counts: np.ndarray
    student_index: Dict[str, int]
    exercise_index: Dict[str, int]

    def student_count(self, student_id: str) -> int:
        return int(self.student_counts[self.student_index[student_id]])

    def exercise_count(self, exercise_id: str) -> int:
        return int(self.exercise_counts[self.exercise_index[exercise_id]])

    def counts(self, kind: str) -> np.ndarray:
        assert kind in ['student', 'exercise'], f"Unknown entity kind {kind}."
        return self.student_counts if kind == 'student' else self.exercise_counts


def compute_frequency(split: DatasetSplit) -> FrequencyTable:
    """Per-student and per-exercise interaction counts on the training split."""
    stu = np.zeros(split.num_students, dtype=np.int64)
    exe = np.zeros(split.num_exercises, dtype=np.int64)
    for log in split.train:
        stu[split.student_index[log.student_id]] += 1
        exe[split.exercise_index[log.exercise_id]] += 1
    return FrequencyTable(stu, exe, split.student_index, split.exercise_index)


def check_cold_warm(cold_lt: int, warm_gt: int):
    if cold_lt > warm_gt + 1:
        raise ConfigError(f"Overlapping cold/warm thresholds: cold_lt={cold_lt} > warm_gt+1={warm_gt + 1}.")

def partition_cold_warm(test: Sequence[ResponseLog], freq: FrequencyTable, cold_lt: int = 3, warm_gt: int = 10):
    r"""Split test logs by the training count of their exercise.

    Returns:
        (cold, warm): cold iff count < cold_lt, warm iff count > warm_gt. Logs in
        between belong to neither.
    """
    check_cold_warm(cold_lt, warm_gt)
    cold, warm = [], []
    for log in test:
        cnt = freq.exercise_count(log.exercise_id)
        if cnt < cold_lt:
            cold.append(log)
        elif cnt > warm_gt:
            warm.append(log)
    return cold, warm


def dropout_train(train: Sequence[ResponseLog], ratio: float, seed: int = 42) -> List[ResponseLog]:
    """Keep round(|train| * (1 - ratio)) logs picked by a seeded shuffle, in their original order."""
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"Dropout ratio must be in [0, 1), got {ratio}.")
    train = list(train)
    N = len(train)
    keep = int(math.floor(N * (1.0 - ratio) + 0.5))
    if keep == N:
        return train
    chosen = np.sort(np.random.RandomState(seed).permutation(N)[:keep])
    return [train[i] for i in chosen]
