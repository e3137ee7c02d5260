"""
Seeded synthetic response data with known traits.

Students carry per-concept traits, exercises a discrimination, a difficulty and
1-3 required concepts. Responses follow p = sigmoid(a * (mean required trait - b)).
Semantic embeddings are a fixed random linear map of each entity's latent
vector plus isotropic noise, L2-normalized.
"""
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from utils.errors import ConfigError
from utils.func import fetch_kws
from .response_log import ResponseLog
from .embedding_table import EmbeddingTable


@dataclass
class SyntheticSpec:
    num_students: int = 200
    num_exercises: int = 100
    num_concepts: int = 12
    logs_per_student: int = 10
    noise: float = 0.1
    seed: int = 0
    dim_sem: int = 32
    popularity: float = 1.0
    max_concepts: int = 3

    def __post_init__(self):
        for name in ['num_students', 'num_exercises', 'num_concepts', 'logs_per_student', 'dim_sem', 'max_concepts']:
            if getattr(self, name) < 1:
                raise ConfigError(f"SyntheticSpec.{name} must be >= 1, got {getattr(self, name)}.")
        if self.noise < 0:
            raise ConfigError(f"SyntheticSpec.noise must be >= 0, got {self.noise}.")
        if self.popularity < 0:
            raise ConfigError(f"SyntheticSpec.popularity must be >= 0, got {self.popularity}.")

    @classmethod
    def from_cfg(cls, cfg):
        kws = fetch_kws(cfg, prefix='synth')
        valid = set(cls.__dataclass_fields__.keys())
        return cls(**{k: v for k, v in kws.items() if k in valid})


@dataclass
class SyntheticData:
    logs: List[ResponseLog]
    tables: Dict[str, EmbeddingTable]
    truth: Dict[str, object]
    probs: np.ndarray = field(default=None)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))

def _embed(rng, latent, dim_sem, noise):
    W = rng.randn(latent.shape[1], dim_sem) / np.sqrt(latent.shape[1])
    Z = latent @ W
    if noise > 0:
        Z = Z + noise * rng.randn(*Z.shape)
    return Z, W

def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.RandomState(spec.seed)
    S, E, K = spec.num_students, spec.num_exercises, spec.num_concepts

    theta = rng.randn(S, K)
    a = rng.uniform(0.5, 2.0, size=E)
    b = rng.randn(E)
    q = np.zeros((E, K), dtype=np.int64)
    required = []
    for j in range(E):
        n_k = rng.randint(1, min(spec.max_concepts, K) + 1)
        ks = np.sort(rng.choice(K, size=n_k, replace=False))
        q[j, ks] = 1
        required.append(ks)

    # Zipf-like popularity over a random exercise ranking
    ranks = rng.permutation(E)
    weights = 1.0 / np.power(ranks + 1.0, spec.popularity)
    weights = weights / weights.sum()

    sids = [f"s{i}" for i in range(S)]
    eids = [f"e{j}" for j in range(E)]
    kids = [f"k{k}" for k in range(K)]
    contents = [f"exercise {eids[j]} practising " + ' and '.join(kids[k] for k in required[j]) for j in range(E)]

    logs, probs = [], []
    replace = spec.logs_per_student > E
    for i in range(S):
        chosen = rng.choice(E, size=spec.logs_per_student, replace=replace, p=weights)
        for j in chosen:
            p = _sigmoid(a[j] * (theta[i, required[j]].mean() - b[j]))
            r = int(rng.rand() < p)
            logs.append(ResponseLog(sids[i], eids[j], tuple(kids[k] for k in required[j]), r, contents[j]))
            probs.append(p)

    stu_latent = theta
    exe_latent = np.concatenate([q.astype(np.float64), a[:, None], b[:, None]], axis=1)
    Z_stu, W_stu = _embed(rng, stu_latent, spec.dim_sem, spec.noise)
    Z_exe, W_exe = _embed(rng, exe_latent, spec.dim_sem, spec.noise)

    seen_s = sorted(set(log.student_id for log in logs), key=lambda x: int(x[1:]))
    seen_e = sorted(set(log.exercise_id for log in logs), key=lambda x: int(x[1:]))
    tables = {
        'student': EmbeddingTable.from_rows('student', seen_s, Z_stu[[int(x[1:]) for x in seen_s]], source='synthetic'),
        'exercise': EmbeddingTable.from_rows('exercise', seen_e, Z_exe[[int(x[1:]) for x in seen_e]], source='synthetic'),
    }
    truth = {
        'theta': {sids[i]: theta[i].tolist() for i in range(S)},
        'a': {eids[j]: float(a[j]) for j in range(E)},
        'b': {eids[j]: float(b[j]) for j in range(E)},
        'concepts': {eids[j]: [kids[k] for k in required[j]] for j in range(E)},
        'prob': [float(p) for p in probs],
    }
    print(f"[dataset] synthetic data: {len(logs)} logs, {len(seen_s)} students, {len(seen_e)} exercises, {K} concepts.")
    return SyntheticData(logs, tables, truth, np.asarray(probs))
