"""
OpenAI-compatible chat-completion and embedding calls with bounded retries and
a prompt-digest cache. Offline mode never touches the network.
"""
import os
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import openai
from tenacity import Retrying, RetryError, retry_if_exception_type, stop_after_attempt, wait_exponential

from dataset.response_log import ResponseLog
from utils.errors import ConfigError, ContractError, TransportError
from utils.func import fetch_kws
from .prompts import PromptPair
from .records import DiagnosisRecord, JsonlCache
from .stub import stub_diagnose


ENV_KEYS = {
    'base_url': 'KCD_LLM_BASE_URL',
    'api_key': 'KCD_LLM_API_KEY',
    'chat_model': 'KCD_LLM_CHAT_MODEL',
    'embed_model': 'KCD_LLM_EMBED_MODEL',
    'offline': 'KCD_LLM_OFFLINE',
}
TRANSIENT_ERRORS = (
    openai.APIConnectionError,  # includes timeouts
    openai.RateLimitError,
    openai.InternalServerError,
    ConnectionError,
    TimeoutError,
)


def _as_bool(v):
    if isinstance(v, str):
        return v.strip().lower() in ('1', 'true', 'yes', 'on')
    return bool(v)


@dataclass
class EndpointConfig:
    base_url: Optional[str] = None
    api_key: Optional[str] = None
    chat_model: str = 'gpt-3.5-turbo-16k'
    embed_model: str = 'text-embedding-3-small'
    offline: bool = True
    max_attempts: int = 3
    backoff: float = 1.0
    backoff_max: float = 30.0
    timeout: float = 60.0
    temperature: float = 0.0
    workers: int = 4
    embed_dim: int = 256

    def __post_init__(self):
        if not self.offline and not self.base_url:
            raise ConfigError("Remote mode needs a base URL (set KCD_LLM_BASE_URL or `llm_base_url`).")
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}.")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}.")
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}.")
        if self.backoff < 0 or self.backoff_max < 0:
            raise ConfigError("Backoff times must be non-negative.")

    @property
    def mode(self):
        return 'stub' if self.offline else 'remote'

    @classmethod
    def from_env(cls, environ=None, **overrides):
        environ = os.environ if environ is None else environ
        kws = dict()
        for field, env_key in ENV_KEYS.items():
            if environ.get(env_key):
                kws[field] = environ[env_key]
        if 'api_key' not in kws and environ.get('OPENAI_API_KEY'):
            kws['api_key'] = environ['OPENAI_API_KEY']
        kws.update({k: v for k, v in overrides.items() if v is not None})
        # no endpoint means offline, unless offline was requested explicitly
        kws['offline'] = _as_bool(kws['offline']) if 'offline' in kws else not kws.get('base_url')
        return cls(**kws)

    @classmethod
    def from_cfg(cls, cfg, environ=None):
        """Environment first, then non-null `llm_*` config keys."""
        valid = set(cls.__dataclass_fields__.keys())
        overrides = {k: v for k, v in fetch_kws(cfg, prefix='llm').items() if k in valid}
        endpoint = cls.from_env(environ, **overrides)
        print(f"[llm] mode = {endpoint.mode}" + ('' if endpoint.offline else f", endpoint = {endpoint.base_url}."))
        return endpoint


def make_client(endpoint: EndpointConfig):
    # retries are handled here, not inside the SDK
    return openai.OpenAI(api_key=endpoint.api_key or 'EMPTY', base_url=endpoint.base_url,
        max_retries=0, timeout=endpoint.timeout)

def _log_retry(retry_state):
    print(f"[warning] transient LLM error ({retry_state.outcome.exception()!r}); "
        f"retry {retry_state.attempt_number} of the request.")

def call_with_retries(endpoint: EndpointConfig, fn, *args, **kws):
    retrying = Retrying(
        stop=stop_after_attempt(endpoint.max_attempts),
        wait=wait_exponential(multiplier=endpoint.backoff, max=endpoint.backoff_max),
        retry=retry_if_exception_type(TRANSIENT_ERRORS),
        before_sleep=_log_retry,
    )
    try:
        return retrying(fn, *args, **kws)
    except RetryError as e:
        raise TransportError(f"LLM request failed after {endpoint.max_attempts} attempt(s): "
            f"{e.last_attempt.exception()!r}.")
    except openai.APIError as e:
        raise TransportError(f"LLM request failed: {e!r}.")

def parse_completion(content: Optional[str], stage: str, label: str = ''):
    r"""Split a completion into (text, reason).

    Diagnosis outputs must be a JSON object with `diagnosis` and `reason`;
    anything else is kept verbatim as the text.
    """
    if content is None or len(content.strip()) == 0:
        raise TransportError(f"Empty completion for {label}.")
    content = content.strip()
    if stage != 'diagnosis':
        return content, ''
    body = content
    if body.startswith('```'):
        body = body.strip('`')
        body = body[4:] if body.startswith('json') else body
    try:
        parsed = json.loads(body)
        if not isinstance(parsed, dict) or not str(parsed.get('diagnosis', '')).strip():
            raise ValueError("no `diagnosis` field")
        return str(parsed['diagnosis']).strip(), str(parsed.get('reason', '')).strip()
    except ValueError:
        print(f"[warning] non-JSON diagnosis output for {label}; keeping the raw text.")
        return content, ''

def chat_complete(endpoint: EndpointConfig, prompt: PromptPair, kind: str, entity_id: str, stage: str,
    logs: Optional[Sequence[ResponseLog]] = None, cache: Optional[JsonlCache] = None, client=None) -> DiagnosisRecord:
    r"""One stage of diagnosis for one entity.

    Cache hits return without any request. Offline mode delegates to
    `stub_diagnose` on `logs`. Remote results are appended to the cache.
    """
    digest = prompt.digest
    if cache is not None and digest in cache:
        return DiagnosisRecord.from_dict(cache.get(digest))
    if endpoint.offline:
        if logs is None:
            raise ContractError("Offline diagnosis needs the logs behind the prompt.")
        return stub_diagnose(kind, entity_id, logs, stage=stage, prompt_digest=digest)

    client = make_client(endpoint) if client is None else client
    response = call_with_retries(endpoint, client.chat.completions.create, model=endpoint.chat_model,
        messages=prompt.to_messages(), temperature=endpoint.temperature)
    text, reason = parse_completion(response.choices[0].message.content, stage, label=f"{kind} `{entity_id}`")
    record = DiagnosisRecord(kind, entity_id, stage, text, reason, digest, 'remote')
    if cache is not None:
        cache.put(record.to_dict())
    return record

def remote_embedding(endpoint: EndpointConfig, text: str, client=None):
    client = make_client(endpoint) if client is None else client
    response = call_with_retries(endpoint, client.embeddings.create, model=endpoint.embed_model, input=[text])
    return list(response.data[0].embedding)
