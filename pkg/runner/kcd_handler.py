from collections import OrderedDict
from dataclasses import asdict

import torch
import torch.nn as nn

from dataset.data_split import compute_frequency
from dataset.embedding_table import ENTITY_KINDS, topk_neighbors
from model.utils import load_projections
from utils.errors import ConfigError, ValidationError
from .base_handler import BaseHandler


class KCDHandler(BaseHandler):
    """
    This class handles the training of a cognitive diagnosis model aligned
    with semantic embeddings, either in the behavioral space (`beh`: global
    and local contrast) or in the semantic space (`sem`: masked reconstruction).
    With alignment `none` it trains exactly like BaseHandler.
    """
    def _check_arguments(self, cfg):
        print("[setup] start checking all arguments...")
        mode = self.train_cfg.align
        if mode != 'none':
            if self.tables is None:
                raise ConfigError(f"Alignment mode `{mode}` needs semantic embeddings; set `path_emb`.")
            sizes = {'student': self.split.num_students, 'exercise': self.split.num_exercises}
            for kind in ENTITY_KINDS:
                if kind not in self.tables:
                    raise ValidationError(f"No {kind} embedding table was given.")
                if len(self.tables[kind]) != sizes[kind]:
                    raise ValidationError(f"The {kind} table has {len(self.tables[kind])} rows for {sizes[kind]} {kind}s.")
            if self.tables['student'].dim != self.tables['exercise'].dim:
                raise ValidationError("Student and exercise embeddings differ in dimension "
                    f"({self.tables['student'].dim} vs {self.tables['exercise'].dim}).")
        print("[setup] argument checking passed.")

    def add_network_loss(self, cfg):
        self.projs, self.neighbors, self.counts = None, None, None
        mode = self.train_cfg.align
        if mode == 'none':
            print("[setup] no alignment term is added.")
            return

        dim_sem = self.tables['student'].dim
        self.projs = load_projections(mode, self.net.behavioral_dims(), dim_sem, hidden_dim=self.align_cfg.proj_hidden)
        if mode == 'beh':
            self.neighbors = {kind: topk_neighbors(self.tables[kind], k=self.align_cfg.topk) for kind in ENTITY_KINDS}
            print(f"[setup] built top-{self.align_cfg.topk} semantic neighbors for students and exercises.")
        else:
            freq = compute_frequency(self.split)
            self.counts = {kind: freq.counts(kind) for kind in ENTITY_KINDS}
            print(f"[setup] masking with the `{self.align_cfg.mask_strategy}` strategy.")

    def modules_to_optimize(self):
        if self.projs is None:
            return self.net
        return nn.ModuleDict({'cdm': self.net, 'proj': self.projs})

    def objective_terms(self, pred, label, stu_idx, exer_idx):
        terms = super(KCDHandler, self).objective_terms(pred, label, stu_idx, exer_idx)
        mode = self.train_cfg.align
        if mode == 'none':
            return terms

        for kind, idx in [('student', stu_idx), ('exercise', exer_idx)]:
            ids = torch.unique(idx)
            c_batch = self.net.entity_embedding(kind, ids)
            if mode == 'beh':
                l_global, l_local = self.loss['Beh'](c_batch, ids, self.tables[kind], self.projs[kind],
                    self.neighbors[kind], kind=kind, generator=self.generator)
                terms[f'Global_{kind}'] = l_global
                terms[f'Local_{kind}'] = l_local
            else:
                terms[f'Recon_{kind}'] = self.loss['Sem'](c_batch, ids, self.tables[kind], self.projs[kind],
                    self.counts[kind], kind=kind, generator=self.generator)
        return terms

    def get_state_dict(self):
        state = super(KCDHandler, self).get_state_dict()
        if self.projs is not None:
            for k, v in self.projs.state_dict().items():
                state['proj.' + k] = v.detach().clone()
        return state

    def load_state(self, state):
        net_state = OrderedDict((k, v) for k, v in state.items() if not k.startswith('proj.'))
        self.net.load_state_dict(net_state, strict=True)
        if self.projs is not None:
            proj_state = OrderedDict((k[len('proj.'):], v) for k, v in state.items() if k.startswith('proj.'))
            self.projs.load_state_dict(proj_state, strict=True)

    def checkpoint_header(self):
        header = super(KCDHandler, self).checkpoint_header()
        if self.projs is not None:
            header['dim_sem'] = self.tables['student'].dim
            header['align_config'] = asdict(self.align_cfg)
        return header
