import os
import os.path as osp
import json
import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import torch

from utils.errors import CheckpointError


CHECKPOINT_VERSION = 1
MANIFEST_VERSION = 1


#############################################
#           General IO functions
#############################################
def ensure_dir(path: str):
    if path and not osp.exists(path):
        os.makedirs(path)
    return path

def atomic_write_text(path: str, text: str):
    """Write through a temporary file and rename, so readers never see a partial file."""
    ensure_dir(osp.dirname(osp.abspath(path)))
    tmp_path = path + '.tmp'
    with open(tmp_path, 'w', encoding='utf-8') as f:
        f.write(text)
    os.replace(tmp_path, path)

def write_json(path: str, data, indent=2):
    atomic_write_text(path, json.dumps(data, indent=indent, ensure_ascii=False) + '\n')

def read_json(path: str):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)

def write_jsonl(path: str, rows):
    lines = [json.dumps(r, ensure_ascii=False) for r in rows]
    atomic_write_text(path, ''.join(line + '\n' for line in lines))

def read_jsonl(path: str) -> List[dict]:
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.strip()
            if len(line) == 0:
                continue
            rows.append(json.loads(line))
    return rows

def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            h.update(chunk)
    return h.hexdigest()

def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()

def path_digest(path: str) -> str:
    """Digest of a file, or of every file (sorted by relative path) under a directory."""
    if osp.isfile(path):
        return file_digest(path)
    h = hashlib.sha256()
    for root, _, files in sorted(os.walk(path)):
        for name in sorted(files):
            if name.startswith('manifest-'):
                continue
            full = osp.join(root, name)
            h.update(osp.relpath(full, path).encode('utf-8'))
            h.update(file_digest(full).encode('utf-8'))
    return h.hexdigest()


#############################################
#     Checkpoints (versioned JSON format)
#############################################
def save_checkpoint(path: str, state_dict, header: dict):
    r"""Save parameters as a versioned JSON document.

    Args:
        path (string): path to save.
        state_dict (dict): parameter name -> Tensor.
        header (dict): run metadata; must record `model` (the model kind).
    """
    assert 'model' in header, "The checkpoint header must record the model kind."
    params = OrderedDict()
    for name, value in state_dict.items():
        arr = value.detach().cpu().to(torch.float64).numpy() if isinstance(value, torch.Tensor) else np.asarray(value, dtype=np.float64)
        params[name] = {'shape': list(arr.shape), 'values': arr.reshape(-1).tolist()}
    doc = {'version': CHECKPOINT_VERSION, 'header': header, 'params': params}
    atomic_write_text(path, json.dumps(doc) + '\n')
    print(f"[info] saved checkpoint to {path}.")

def load_checkpoint(path: str) -> Tuple[dict, "OrderedDict[str, torch.Tensor]"]:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            doc = json.load(f, object_pairs_hook=OrderedDict)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path} is not a valid checkpoint document: {e}")
    version = doc.get('version', None)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version} in {path} (expected {CHECKPOINT_VERSION}).")
    state = OrderedDict()
    try:
        header, params = dict(doc['header']), doc['params']
        for name, item in params.items():
            shape = tuple(item['shape'])
            values = torch.tensor(item['values'], dtype=torch.float64)
            if values.numel() != int(np.prod(shape, dtype=np.int64)):
                raise CheckpointError(f"Parameter {name} holds {values.numel()} values but shape {shape}.")
            state[name] = values.reshape(shape)
    except CheckpointError:
        raise
    except KeyError as e:
        raise CheckpointError(f"{path} misses the field {e} of a checkpoint document.")
    except (TypeError, ValueError, AttributeError) as e:
        raise CheckpointError(f"{path} holds a malformed checkpoint field: {e}")
    return header, state


#############################################
#        Run manifest and result tables
#############################################
@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: Optional[int]
    input_digests: Dict[str, str] = field(default_factory=dict)
    output_paths: List[str] = field(default_factory=list)
    duration_sec: float = 0.0
    version: int = MANIFEST_VERSION

    def to_dict(self):
        return asdict(self)

def write_run_manifest(out_dir: str, manifest: RunManifest) -> str:
    path = osp.join(ensure_dir(out_dir), f"manifest-{manifest.subcommand}.json")
    write_json(path, manifest.to_dict())
    print(f"[info] wrote run manifest to {path}.")
    return path

def save_metrics(rows, csv_path: str, json_path: Optional[str] = None):
    r"""Save evaluation rows as CSV `subset,auc,acc,rmse,n` plus a JSON mirror.

    Args:
        rows (list): a list of `Metrics`.
    """
    cols = ['subset', 'auc', 'acc', 'rmse', 'n']
    df = pd.DataFrame([{c: getattr(r, c) for c in cols} for r in rows], columns=cols)
    ensure_dir(osp.dirname(osp.abspath(csv_path)))
    df.to_csv(csv_path, index=False)
    if json_path is not None:
        write_json(json_path, df.to_dict(orient='records'))
    print("[info] saved metrics to {}.".format(csv_path))
