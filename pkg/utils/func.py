import sys
import random
import yaml
import numpy as np
import torch


def rename_keys(d, prefix_name, sep='/'):
    newd = dict()
    for k, v in d.items():
        newd[prefix_name + sep + k] = v
    return newd

def fetch_kws(d, prefix:str=''):
    if prefix == '':
        return d
    else:
        ret = dict()
        for k in d.keys():
            if k.startswith(prefix):
                new_key = k.split(prefix, 1)[1]
                if len(new_key) < 2:
                    continue
                ret[new_key[1:]] = d[k]
        return ret

def parse_str_dims(s, sep='-', dtype=int):
    if type(s) != str:
        return [s] if not isinstance(s, (list, tuple)) else [dtype(_) for _ in s]
    else:
        return [dtype(_) for _ in s.split(sep)]


def seed_everything(seed, num_threads=1):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    # bit-identical reductions need a fixed intra-op thread count
    torch.set_num_threads(num_threads)
    print('[setup] seed: {}'.format(seed))

# generator = g
def seed_generator(seed):
    g = torch.Generator()
    g.manual_seed(seed)
    return g

def derive_seed(seed, stream=1):
    """Seed of the `stream`-th independent random stream under `seed`."""
    draws = torch.randint(0, 2**31 - 1, (stream + 1,), generator=seed_generator(seed))
    return int(draws[stream].item())

def print_config(config, print_to_path=None):
    if print_to_path is not None:
        f = open(print_to_path, 'w')
    else:
        f = sys.stdout

    print("**************** RUN CONFIGURATION ****************", file=f)
    for key in sorted(config.keys()):
        val = config[key]
        keystr = "{}".format(key) + (" " * (24 - len(key)))
        print("{} -->   {}".format(keystr, val), file=f)
    print("**************** RUN CONFIGURATION ****************", file=f)

    if print_to_path is not None:
        f.close()

def save_config(config, path_to_save):
    with open(path_to_save, "w") as f:
        yaml.safe_dump(config, f, sort_keys=True)

def load_config(path):
    with open(path, "r") as setting:
        config = yaml.safe_load(setting)
    return {} if config is None else config

def print_metrics(metrics, print_to_path=None):
    """
    metrics (list): a list of `Metrics` rows, one per evaluated subset.
    """
    if print_to_path is not None:
        f = open(print_to_path, 'w')
    else:
        f = sys.stdout

    print("**************** MODEL METRICS ****************", file=f)
    for row in metrics:
        for name in ['auc', 'acc', 'rmse', 'n']:
            cur_key = row.subset + '/' + name
            keystr  = "{}".format(cur_key) + (" " * (20 - len(cur_key)))
            print("{} -->   {}".format(keystr, getattr(row, name)), file=f)
    print("**************** MODEL METRICS ****************", file=f)

    if print_to_path is not None:
        f.close()


class EarlyStopping:
    """Early stops the training if the monitored score doesn't improve after a given patience."""
    def __init__(self, warmup=0, patience=5, start_epoch=0, mode='max', verbose=False):
        """
        Args:
            patience (int): How long to wait after last time the monitored score improved.
                            Default: 5
            start_epoch (int): Earliest epoch possible for stopping
            mode (string): 'max' if a larger score is better (e.g., AUC), 'min' otherwise.
            verbose (bool): If True, prints a message for each improvement.
                            Default: False
        """
        assert mode in ['max', 'min'], f"Expected mode `max` or `min` but got {mode}."
        self.warmup = warmup
        self.patience = patience
        self.start_epoch = start_epoch
        self.mode = mode
        self.verbose = verbose
        self.counter = 0
        self.best_score = None
        self.early_stop = False
        self.save_checkpoint = False

    def __call__(self, epoch, monitor_value):

        self.save_checkpoint = False

        score = monitor_value if self.mode == 'max' else -monitor_value

        if epoch < self.warmup:
            pass
        elif self.best_score is None:
            self.update_score(score)
        elif score - 1e-12 <= self.best_score:
            self.counter += 1
            print(f'[early-stopping] counter: {self.counter} out of {self.patience}')
            if self.counter >= self.patience and epoch > self.start_epoch:
                self.early_stop = True
        else:
            self.update_score(score)
            self.counter = 0

    def stop(self, **kws):
        return self.early_stop

    def save_ckpt(self, **kws):
        return self.save_checkpoint

    def update_score(self, score):
        if self.verbose:
            print(f'[early-stopping] monitored score improved ({self.best_score} --> {score:.6f}).')
        self.best_score = score
        self.save_checkpoint = True
