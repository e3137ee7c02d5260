import math
import os.path as osp
import copy
from collections import OrderedDict
from dataclasses import dataclass, asdict
from types import SimpleNamespace
from typing import Optional

import torch
from torch.utils.data import DataLoader
from tqdm import tqdm
import wandb

from dataset.data_split import DatasetSplit, QMatrix
from dataset.utils import prepare_cd_dataset
from eval.utils import load_evaluator
from loss.utils import load_loss, ALIGN_MODES
from loss.loss_align import AlignmentConfig
from model.cdm import CDM_KINDS
from model.utils import load_model, count_parameters
from numerics import Tape
from optim import create_optimizer
from utils.errors import ConfigError
from utils.func import seed_everything, seed_generator, fetch_kws, rename_keys
from utils.func import print_config, save_config, EarlyStopping
from utils.io import ensure_dir, save_checkpoint, write_jsonl


@dataclass
class TrainConfig:
    model: str = 'NCD'
    align: str = 'none'
    epochs: int = 30
    batch_size: int = 256
    lr: float = 0.002
    patience: int = 5
    seed: int = 42

    def __post_init__(self):
        self.model = self.model.upper()
        if self.model not in CDM_KINDS:
            raise ConfigError(f"Unknown model {self.model}; expected one of {CDM_KINDS}.")
        if self.align not in ALIGN_MODES:
            raise ConfigError(f"Unknown alignment mode {self.align}; expected one of {ALIGN_MODES}.")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}.")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}.")
        if self.patience < 1:
            raise ConfigError(f"es_patience must be >= 1, got {self.patience}.")

    @classmethod
    def from_cfg(cls, cfg):
        return cls(model=str(cfg['model']), align=str(cfg['align']), epochs=int(cfg['epochs']),
            batch_size=int(cfg['batch_size']), lr=float(cfg['opt_lr']), patience=int(cfg['es_patience']),
            seed=int(cfg['seed']))


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


class BaseHandler(object):
    """
    This class handles the initialization, training, and evaluation of a
    cognitive diagnosis model on response logs.
    """
    def __init__(self, cfg, split: DatasetSplit, q: QMatrix, tables: Optional[dict] = None,
        out_dir: Optional[str] = None):
        self.cfg = cfg
        self.train_cfg = TrainConfig.from_cfg(cfg)
        seed_everything(self.train_cfg.seed)
        self.split = split
        self.q = q
        self.tables = tables
        self.out_dir = out_dir
        self._check_arguments(cfg)

        # Paths setup
        if out_dir is not None:
            ensure_dir(out_dir)
            self.ckpt_path = osp.join(out_dir, 'checkpoint.json')
            self.history_path = osp.join(out_dir, 'history.jsonl')
            self.config_path = osp.join(out_dir, 'print_config.txt')
            self.config_yaml = osp.join(out_dir, 'config.yaml')
            print(f"[setup] path to save: {out_dir}")
        self.writer = wandb.init(project=cfg['wandb_prj'], dir=cfg['wandb_dir'], config=cfg,
            mode=cfg['wandb_mode'], reinit=True)

        # Others setup
        self.net = self.func_load_model(cfg, split, q)
        self.align_cfg = AlignmentConfig.from_cfg(cfg)
        self.loss, self.loss_weight = self.func_load_loss(cfg, self.align_cfg)
        self.add_network_loss(cfg)
        self.optimizer = self.func_load_optimizer(self.modules_to_optimize(), cfg)
        self.evaluator, self.metrics_list, self.ret_metrics = self.func_load_evaluator(cfg)
        self.generator = seed_generator(self.train_cfg.seed)
        self.history = []
        self.best_state, self.best_epoch, self.best_score = None, None, None

        if out_dir is not None:
            print_config(cfg, print_to_path=self.config_path)
            save_config(cfg, self.config_yaml)

    def _check_arguments(self, cfg):
        print("[setup] start checking all arguments...")
        if self.train_cfg.align != 'none':
            raise ConfigError(f"{type(self).__name__} trains without alignment; use KCDHandler for `{self.train_cfg.align}`.")
        print("[setup] argument checking passed.")

    @staticmethod
    def func_load_model(cfg, split, q):
        arch = cfg['model'].upper()
        arch_cfg = fetch_kws(cfg, prefix=arch.lower())
        model = load_model(arch, split.num_students, split.num_exercises, split.num_concepts,
            q_matrix=q.to_tensor(), **arch_cfg)
        print(f"[setup] model {arch} with {count_parameters(model)} parameters ({arch_cfg}).")
        return model

    @staticmethod
    def func_load_loss(cfg, align_cfg):
        return load_loss(cfg['align'], align_cfg)

    def add_network_loss(self, cfg):
        pass

    def modules_to_optimize(self):
        return self.net

    @staticmethod
    def func_load_optimizer(model, cfg):
        cfg_optimizer = SimpleNamespace(opt=cfg['opt_name'], weight_decay=cfg['opt_weight_decay'],
            lr=cfg['opt_lr'], opt_eps=None, opt_betas=None, momentum=None)
        optimizer = create_optimizer(cfg_optimizer, model)
        return optimizer

    @staticmethod
    def func_load_evaluator(cfg):
        evaluator = load_evaluator('cd', threshold=cfg['threshold'])
        metrics_list = ['auc', 'acc', 'rmse', 'loss']
        ret_metrics = ['auc', 'loss']
        return evaluator, metrics_list, ret_metrics

    def _loader(self, logs, name, shuffle=False):
        dataset = prepare_cd_dataset(logs, self.split, name=name)
        return DataLoader(dataset, batch_size=self.train_cfg.batch_size, shuffle=shuffle,
            generator=seed_generator(self.train_cfg.seed) if shuffle else None, num_workers=0)

    def exec(self, save: bool = True):
        print('[exec] with model = {}, align = {}.'.format(self.train_cfg.model, self.train_cfg.align))
        train_loader = self._loader(self.split.train, 'train', shuffle=True)
        val_loader = self._loader(self.split.valid, 'valid') if len(self.split.valid) > 0 else None
        self._run_training(self.train_cfg.epochs, train_loader, val_loader=val_loader, run_name='train')

        ret = {'best_epoch': self.best_epoch, 'valid_auc': _finite_or_none(self.best_score), 'history': self.history}
        if save and self.out_dir is not None:
            self.save_model(self.ckpt_path)
            write_jsonl(self.history_path, self.history)
            print(f"[train] saved per-epoch history to {self.history_path}.")
            ret.update({'checkpoint': self.ckpt_path, 'history_path': self.history_path})
        return ret

    def _run_training(self, epochs, train_loader, val_loader=None, run_name='train'):
        """Train the model and keep the parameters of the best validation AUC.

        Args:
            epochs (int): Epochs to run.
            train_loader ('DataLoader'): DatasetLoader of training logs.
            val_loader ('DataLoader'): DatasetLoader of validation logs for early stopping; None to train all epochs.
            run_name (string): Name of this training, used as the prefix of printed and logged metrics.
        """
        self.early_stop = EarlyStopping(
            warmup=self.cfg['es_warmup'],
            patience=self.train_cfg.patience,
            start_epoch=self.cfg['es_start_epoch'],
            mode='max',
            verbose=self.cfg['es_verbose'],
        )
        if val_loader is None:
            print(f"[{run_name}] warning: no validation logs, so early stopping is not active.")

        for epoch in range(1, epochs + 1):
            train_loss = self._train_each_epoch(epoch, train_loader)

            valid_auc = None
            if val_loader is not None:
                val_cltor = self.test_model(self.net, val_loader)
                valid_auc, _ = self._eval_and_print(val_cltor['pred'], name='valid', at_epoch=epoch)
            self.history.append({'epoch': epoch, 'train_loss': train_loss, 'valid_auc': _finite_or_none(valid_auc)})
            wandb.log({'train/epoch_loss': train_loss, 'epoch': epoch})

            if val_loader is None:
                self._keep_best(epoch, None)
                continue
            monitor = valid_auc if math.isfinite(valid_auc) else -math.inf
            self.early_stop(epoch, monitor)
            if self.early_stop.save_ckpt():
                self._keep_best(epoch, valid_auc)
                print("[{}] best model kept at epoch {}".format(run_name, epoch))
            if self.early_stop.stop():
                print("[{}] early stopped at epoch {}".format(run_name, epoch))
                break

        if self.best_state is None:
            # every epoch fell inside the warmup
            self._keep_best(epoch, valid_auc)
        self.load_state(self.best_state)
        print("[{}] restored the model of epoch {} (valid auc = {}).".format(run_name, self.best_epoch, self.best_score))

    def _keep_best(self, epoch, score):
        self.best_state = copy.deepcopy(self.get_state_dict())
        self.best_epoch = epoch
        self.best_score = score

    def _train_each_epoch(self, epoch, train_loader):
        self.net.train()
        total_loss, num_logs = 0.0, 0
        loop = tqdm(train_loader, desc='train')
        for data_idx, data_x, data_y in loop:
            stu_idx, exer_idx = data_x
            batch_loss = self._update_network(stu_idx, exer_idx, data_y)
            total_loss += batch_loss
            num_logs += data_y.shape[0]

            wandb.log({'train/batch_loss': batch_loss})
            loop.set_description(f"Epoch [{epoch}/{self.train_cfg.epochs}]")
            loop.set_postfix(loss=batch_loss)
        return total_loss / max(num_logs, 1)

    def objective_terms(self, pred, label, stu_idx, exer_idx):
        """Named, unweighted loss terms of one batch."""
        return OrderedDict([('BCE', self.loss['BCE'](pred, label))])

    def term_weights(self, terms):
        # `Global_student` is weighted by `Global`
        return {name: self.loss_weight[name.split('_')[0]] for name in terms}

    def calc_objective_loss(self, pred, label, stu_idx, exer_idx, tape: Optional[Tape] = None):
        """Returns the total objective, recorded on `tape` (a fresh one if None), and its named terms."""
        tape = Tape() if tape is None else tape
        terms = self.objective_terms(pred, label, stu_idx, exer_idx)
        total = tape.weighted_sum(terms, self.term_weights(terms))
        return total.value, OrderedDict((k, v.item()) for k, v in terms.items())

    def _update_network(self, stu_idx, exer_idx, label):
        """
        Update network using one batch data
        """
        pred = self.net(stu_idx, exer_idx)
        self.optimizer.zero_grad()
        # a fresh tape per step; non-finite terms raise NumericError here
        tape = Tape()
        loss, terms = self.calc_objective_loss(pred, label, stu_idx, exer_idx, tape=tape)
        tape.backward()
        self.optimizer.step()
        # NCD keeps its interaction weights non-negative
        self.net.project_nonneg()
        if len(terms) > 1:
            wandb.log(rename_keys(terms, 'train', sep='/'))
        return loss.item()

    def _eval_and_print(self, cltor, name='', ret_metrics=None, at_epoch=None):
        if ret_metrics is None:
            ret_metrics = self.ret_metrics
        if at_epoch is None:
            at_epoch = 'NA'
        eval_results = self.evaluator.compute(cltor, self.metrics_list)
        eval_results = rename_keys(eval_results, name, sep='/')

        print("[{}] At epoch {}:".format(name, at_epoch), end=' ')
        print(' '.join(['{}={:.6f},'.format(k, v) for k, v in eval_results.items()]))
        wandb.log(eval_results)

        return [eval_results[name + '/' + k] for k in ret_metrics]

    @staticmethod
    def test_model(model, loader):
        model.eval()
        all_idx, all_pred, all_gt = [], [], []
        for data_idx, data_x, data_y in loader:
            stu_idx, exer_idx = data_x
            with torch.no_grad():
                pred = model(stu_idx, exer_idx)
            all_gt.append(data_y)
            all_pred.append(pred.detach().cpu())
            all_idx.append(data_idx.reshape(-1))

        cltor = dict()
        all_idx = torch.cat(all_idx, dim=0)
        uids = loader.dataset.uid
        cltor['pred'] = {
            'y': torch.cat(all_gt, dim=0),
            'y_hat': torch.cat(all_pred, dim=0),
            'uid': [uids[i] for i in all_idx.tolist()],
        }
        return cltor

    def get_state_dict(self):
        return OrderedDict((k, v.detach().clone()) for k, v in self.net.state_dict().items())

    def load_state(self, state):
        self.net.load_state_dict(state, strict=True)

    def checkpoint_header(self):
        arch = self.train_cfg.model
        return {
            'model': arch,
            'align': self.train_cfg.align,
            'num_students': self.split.num_students,
            'num_exercises': self.split.num_exercises,
            'num_concepts': self.split.num_concepts,
            'model_kws': fetch_kws(self.cfg, prefix=arch.lower()),
            'dims_beh': self.net.behavioral_dims(),
            'epoch': self.best_epoch,
            'valid_auc': _finite_or_none(self.best_score),
            'seed': self.train_cfg.seed,
            'train_config': asdict(self.train_cfg),
        }

    def save_model(self, path):
        save_checkpoint(path, self.get_state_dict(), self.checkpoint_header())
