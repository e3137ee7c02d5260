from .records import DiagnosisRecord, JsonlCache, read_diagnoses, write_diagnoses
from .prompts import (
    PromptPair, prompt_digest, load_prompt_templates,
    build_student_collab_prompt, build_exercise_collab_prompt, build_diagnosis_prompt, build_collab_prompt
)
from .stub import stub_diagnose, placeholder_record, concept_accuracy, concept_union, NO_HISTORY_TEXT
from .client import EndpointConfig, chat_complete, parse_completion
from .embedder import embed_text, stub_embed, char_trigrams, trigram_bucket
from .diagnose import run_diagnosis, run_embedding, group_train_logs, final_diagnoses, default_cache_path
