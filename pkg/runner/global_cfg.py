"""
Default values of every configuration key. YAML files override them and
command-line flags override the YAML file.
"""

DEFAULT_CFG = {
    # run
    'seed': 42,
    'out_dir': './results',
    'wandb_mode': 'disabled',
    'wandb_prj': 'kcd',
    'wandb_dir': None,

    # data
    'path_logs': None,
    'log_format': 'auto',
    'data_dir': None,
    'path_emb': None,
    'path_diagnoses': None,
    'split_train': 0.8,
    'split_valid': 0.1,
    'split_test': 0.1,
    'split_seed': 42,
    'cold_lt': 3,
    'warm_gt': 10,

    # model
    'model': 'NCD',
    'mirt_latent_dim': 16,
    'dina_init_slip_guess': 0.2,
    'ncd_hidden_dims': '512-256',
    'checkpoint': None,

    # training
    'align': 'none',
    'epochs': 30,
    'batch_size': 256,
    'opt_name': 'adam',
    'opt_lr': 0.002,
    'opt_weight_decay': 0.0,
    'es_patience': 5,
    'es_warmup': 0,
    'es_start_epoch': 0,
    'es_verbose': False,
    'threshold': 0.5,

    # alignment
    'align_alpha': 0.04,
    'align_beta': 0.015,
    'align_lambda': 0.2,
    'align_tau': 0.2,
    'align_topk': 20,
    'align_mask_min': 0.1,
    'align_mask_max': 0.5,
    'align_mask_strategy': 'dynamic',
    'align_mask_const': 0.3,
    'align_proj_hidden': 512,
    'align_max_negatives': 8192,

    # llm (the access token is read from the environment only)
    'llm_base_url': None,
    'llm_chat_model': None,
    'llm_embed_model': None,
    'llm_offline': None,
    'llm_max_attempts': 3,
    'llm_backoff': 1.0,
    'llm_backoff_max': 30.0,
    'llm_timeout': 60.0,
    'llm_temperature': 0.0,
    'llm_workers': 4,
    'llm_embed_dim': 256,
    'llm_use_collab': True,
    'llm_max_chars': 12000,

    # synthetic data
    'synth_num_students': 200,
    'synth_num_exercises': 100,
    'synth_num_concepts': 12,
    'synth_logs_per_student': 10,
    'synth_noise': 0.1,
    'synth_seed': 0,
    'synth_dim_sem': 32,
    'synth_popularity': 1.0,
    'synth_max_concepts': 3,

    # dropout sweep
    'sweep_ratios': '0.1-0.2-0.3-0.4-0.5',
    'sweep_seeds': '0-1-2-3-4',
}
