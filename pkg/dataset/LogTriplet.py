"""
Class for triplet-style dataloader
"""
from typing import Sequence
import torch
from torch.utils.data import Dataset

from .response_log import ResponseLog
from .data_split import DatasetSplit


class LogTripletDataset(Dataset):
    r"""Response logs as dense (student, exercise, label) triplets.

    Args:
        logs (list): ResponseLog records of one subset.
        split (DatasetSplit): provides the dense indices.
        name (string): subset name, only used for printing.
    """
    def __init__(self, logs: Sequence[ResponseLog], split: DatasetSplit, name: str = 'train'):
        super(LogTripletDataset, self).__init__()
        self.name = name
        self.logs = tuple(logs)
        self.stu_idx = torch.tensor([split.student_index[log.student_id] for log in self.logs], dtype=torch.long)
        self.exer_idx = torch.tensor([split.exercise_index[log.exercise_id] for log in self.logs], dtype=torch.long)
        self.labels = torch.tensor([log.correct for log in self.logs], dtype=torch.float64)
        self.uid = [f"{log.student_id}-{log.exercise_id}" for log in self.logs]
        self.summary()

    def summary(self):
        n_pos = int(self.labels.sum().item()) if len(self.logs) > 0 else 0
        print(f"[dataset] {self.name}: {len(self.logs)} logs, {n_pos} correct.")

    def __len__(self):
        return len(self.logs)

    def __getitem__(self, index):
        idx = torch.tensor([index], dtype=torch.long)
        return idx, (self.stu_idx[index], self.exer_idx[index]), self.labels[index]
