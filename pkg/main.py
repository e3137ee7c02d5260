"""
This is our entry file to run the whole pipeline:

    ingest | synth -> diagnose -> embed -> train -> eval | sweep-dropout | export-emb

Every run writes `manifest-<subcommand>.json` beside its outputs.
Exit status: 0 on success, 1 on validation or config errors, 2 on I/O or transport errors.
"""
import sys
import os.path as osp
import time
import argparse
import copy

import wandb

from dataset import ingest_logs, save_dataset_dir, load_dataset_dir, split_dataset, build_q_matrix, compute_frequency
from dataset.embedding_table import load_embedding_tables, write_embedding_tables
from dataset.synthetic import SyntheticSpec, generate_synthetic
from llm import EndpointConfig, run_diagnosis, run_embedding, read_diagnoses, write_diagnoses, default_cache_path
from runner import load_handler, restore_from_checkpoint, check_checkpoint_split
from runner import evaluate_cold_warm, dropout_sweep, export_embeddings
from runner.global_cfg import DEFAULT_CFG
from utils.errors import ConfigError, KCDError, exit_code_of
from utils.func import load_config, print_config, print_metrics
from utils.io import RunManifest, write_run_manifest, path_digest, ensure_dir
from utils.io import save_metrics, write_json, write_jsonl, atomic_write_text


SUBCOMMANDS = ['ingest', 'diagnose', 'embed', 'train', 'eval', 'sweep-dropout', 'synth', 'export-emb']

# flag dest -> config key
FLAG_KEYS = {
    'out_dir': 'out_dir',
    'data_dir': 'data_dir',
    'logs': 'path_logs',
    'emb': 'path_emb',
    'diagnoses': 'path_diagnoses',
    'checkpoint': 'checkpoint',
    'model': 'model',
    'align': 'align',
    'seed': 'seed',
    'epochs': 'epochs',
    'batch_size': 'batch_size',
    'lr': 'opt_lr',
    'alpha': 'align_alpha',
    'beta': 'align_beta',
    'lambda_': 'align_lambda',
    'tau': 'align_tau',
    'topk': 'align_topk',
    'cold_lt': 'cold_lt',
    'warm_gt': 'warm_gt',
    'offline': 'llm_offline',
}


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"[cli] error: {message}", file=sys.stderr)
        raise SystemExit(1)


def get_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', '-f', type=str, default=None, help='Path to a YAML config file.')
    common.add_argument('--out-dir', dest='out_dir', type=str, default=None, help='Directory for outputs.')
    common.add_argument('--data-dir', dest='data_dir', type=str, default=None, help='Dataset directory.')
    common.add_argument('--logs', type=str, default=None, help='Raw response logs (CSV or JSON-lines).')
    common.add_argument('--emb', type=str, default=None, help='Semantic embedding tables (JSON-lines).')
    common.add_argument('--diagnoses', type=str, default=None, help='Diagnosis records (JSON-lines).')
    common.add_argument('--checkpoint', type=str, default=None, help='Model checkpoint (JSON).')
    common.add_argument('--model', type=str, default=None, help='IRT, MIRT, DINA or NCD.')
    common.add_argument('--align', type=str, default=None, choices=['none', 'beh', 'sem'], help='Alignment mode.')
    common.add_argument('--seed', type=int, default=None)
    common.add_argument('--epochs', type=int, default=None)
    common.add_argument('--batch-size', dest='batch_size', type=int, default=None)
    common.add_argument('--lr', type=float, default=None)
    common.add_argument('--alpha', type=float, default=None, help='Weight of the global contrast.')
    common.add_argument('--beta', type=float, default=None, help='Weight of the local contrast.')
    common.add_argument('--lambda', dest='lambda_', type=float, default=None, help='Weight of the reconstruction.')
    common.add_argument('--tau', type=float, default=None, help='InfoNCE temperature.')
    common.add_argument('--topk', type=int, default=None, help='Semantic neighbors per entity.')
    common.add_argument('--cold-lt', dest='cold_lt', type=int, default=None)
    common.add_argument('--warm-gt', dest='warm_gt', type=int, default=None)
    common.add_argument('--offline', action='store_const', const=True, default=None,
        help='Use the offline stub instead of the LLM endpoint.')

    parser = ArgumentParser(prog='main.py', description='Knowledge-enhanced cognitive diagnosis.')
    subparsers = parser.add_subparsers(dest='subcommand', metavar='{' + ','.join(SUBCOMMANDS) + '}')
    subparsers.required = True
    for name in SUBCOMMANDS:
        subparsers.add_parser(name, parents=[common])
    return parser

def get_config(args):
    """Defaults, then the YAML file, then command-line flags."""
    cfg = copy.deepcopy(DEFAULT_CFG)
    if args['config'] is not None:
        file_cfg = load_config(args['config'])
        unknown = sorted(k for k in file_cfg if k not in cfg)
        if len(unknown) > 0:
            print(f"[warning] unknown config keys are kept as-is: {unknown}.")
        cfg.update(file_cfg)
    for dest, key in FLAG_KEYS.items():
        if args.get(dest) is not None:
            cfg[key] = args[dest]
    return cfg


#############################################
#              Subcommands
#############################################
def _require(cfg, key, flag):
    if cfg[key] is None:
        raise ConfigError(f"`{key}` is not set; pass {flag} or set it in the config file.")
    return cfg[key]

def _load_dataset(cfg, inputs):
    path = _require(cfg, 'data_dir', '--data-dir')
    inputs['data_dir'] = path_digest(path)
    return load_dataset_dir(path)

def _load_tables(cfg, split, inputs, required):
    if cfg['path_emb'] is None:
        if required:
            raise ConfigError(f"Alignment mode `{cfg['align']}` needs semantic embeddings; pass --emb.")
        return None
    inputs['emb'] = path_digest(cfg['path_emb'])
    return load_embedding_tables(cfg['path_emb'], split)

def cmd_ingest(cfg, out_dir, inputs):
    path = _require(cfg, 'path_logs', '--logs')
    inputs['logs'] = path_digest(path)
    split, q = ingest_logs(path, cfg)
    split.summary()
    return save_dataset_dir(osp.join(out_dir, 'dataset'), split, q)

def cmd_synth(cfg, out_dir, inputs):
    spec = SyntheticSpec.from_cfg(cfg)
    data = generate_synthetic(spec)
    split = split_dataset(data.logs, ratios=(cfg['split_train'], cfg['split_valid'], cfg['split_test']),
        seed=cfg['split_seed'])
    split.summary()
    outputs = save_dataset_dir(osp.join(out_dir, 'dataset'), split, build_q_matrix(split))
    path_emb = osp.join(out_dir, 'embeddings.jsonl')
    write_embedding_tables([data.tables['student'].aligned_to(split.student_index),
        data.tables['exercise'].aligned_to(split.exercise_index)], path_emb)
    path_truth = osp.join(out_dir, 'truth.json')
    write_json(path_truth, data.truth)
    return outputs + [path_emb, path_truth]

def cmd_diagnose(cfg, out_dir, inputs):
    split, _ = _load_dataset(cfg, inputs)
    endpoint = EndpointConfig.from_cfg(cfg)
    records = run_diagnosis(split, endpoint, cache_path=default_cache_path(out_dir, 'diagnose-cache.jsonl'),
        use_collab=bool(cfg['llm_use_collab']), max_chars=cfg['llm_max_chars'])
    path = osp.join(out_dir, 'diagnoses.jsonl')
    write_diagnoses(records, path)
    return [path]

def cmd_embed(cfg, out_dir, inputs):
    split, _ = _load_dataset(cfg, inputs)
    path_diag = cfg['path_diagnoses'] or osp.join(out_dir, 'diagnoses.jsonl')
    inputs['diagnoses'] = path_digest(path_diag)
    endpoint = EndpointConfig.from_cfg(cfg)
    tables = run_embedding(read_diagnoses(path_diag), split, endpoint,
        cache_path=default_cache_path(out_dir, 'embed-cache.jsonl'))
    path = osp.join(out_dir, 'embeddings.jsonl')
    write_embedding_tables([tables['student'], tables['exercise']], path)
    return [path]

def cmd_train(cfg, out_dir, inputs):
    split, q = _load_dataset(cfg, inputs)
    tables = _load_tables(cfg, split, inputs, required=cfg['align'] != 'none')
    handler = load_handler(cfg, split, q, tables=tables, out_dir=out_dir)
    res = handler.exec(save=True)
    wandb.finish()
    return [res['checkpoint'], res['history_path'], handler.config_yaml, handler.config_path]

def cmd_eval(cfg, out_dir, inputs):
    path_ckpt = _require(cfg, 'checkpoint', '--checkpoint')
    inputs['checkpoint'] = path_digest(path_ckpt)
    header, net, _ = restore_from_checkpoint(path_ckpt)
    split, _ = _load_dataset(cfg, inputs)
    check_checkpoint_split(header, split)
    rows = evaluate_cold_warm(net, split, compute_frequency(split), cold_lt=cfg['cold_lt'], warm_gt=cfg['warm_gt'],
        threshold=cfg['threshold'])
    path_csv, path_json = osp.join(out_dir, 'metrics.csv'), osp.join(out_dir, 'metrics.json')
    save_metrics(rows, path_csv, path_json)
    print_metrics(rows)
    return [path_csv, path_json]

def cmd_sweep_dropout(cfg, out_dir, inputs):
    split, q = _load_dataset(cfg, inputs)
    tables = _load_tables(cfg, split, inputs, required=cfg['align'] != 'none')
    df = dropout_sweep(cfg, split, q, tables=tables)
    wandb.finish()
    path = osp.join(out_dir, 'sweep.csv')
    atomic_write_text(path, df.to_csv(index=False))
    print(f"[sweep] saved {len(df)} row(s) to {path}.")
    return [path]

def cmd_export_emb(cfg, out_dir, inputs):
    path_ckpt = _require(cfg, 'checkpoint', '--checkpoint')
    inputs['checkpoint'] = path_digest(path_ckpt)
    header, net, projs = restore_from_checkpoint(path_ckpt)
    split, _ = _load_dataset(cfg, inputs)
    check_checkpoint_split(header, split)
    tables = _load_tables(cfg, split, inputs, required=header['align'] != 'none')
    path = osp.join(out_dir, 'embeddings-export.jsonl')
    write_jsonl(path, export_embeddings(net, projs, header, split, tables=tables))
    print(f"[info] exported embeddings to {path}.")
    return [path]

COMMANDS = {
    'ingest': cmd_ingest,
    'diagnose': cmd_diagnose,
    'embed': cmd_embed,
    'train': cmd_train,
    'eval': cmd_eval,
    'sweep-dropout': cmd_sweep_dropout,
    'synth': cmd_synth,
    'export-emb': cmd_export_emb,
}


def run(argv=None) -> int:
    try:
        args = vars(get_parser().parse_args(argv))
    except SystemExit as e:
        return 0 if e.code is None else int(e.code)

    subcommand = args['subcommand']
    start = time.time()
    try:
        cfg = get_config(args)
        out_dir = ensure_dir(cfg['out_dir'])
        print_config(cfg)
        inputs = dict()
        outputs = COMMANDS[subcommand](cfg, out_dir, inputs)
        seed = cfg['synth_seed'] if subcommand == 'synth' else cfg['seed']
        manifest = RunManifest(subcommand, cfg, seed, input_digests=inputs, output_paths=list(outputs),
            duration_sec=round(time.time() - start, 3))
        write_run_manifest(out_dir, manifest)
    except (KCDError, OSError) as e:
        print(f"[cli] error: {e}", file=sys.stderr)
        return exit_code_of(e)
    print(f"[cli] `{subcommand}` finished in {time.time() - start:.1f}s.")
    return 0


if __name__ == '__main__':
    sys.exit(run())
