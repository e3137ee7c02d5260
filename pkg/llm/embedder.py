import hashlib
from typing import Optional

import numpy as np

from utils.errors import ContractError, ValidationError
from utils.io import text_digest
from .client import EndpointConfig, remote_embedding
from .records import JsonlCache


def char_trigrams(text: str):
    """Character trigrams in order; texts shorter than 3 characters are one gram."""
    if len(text) < 3:
        return [text]
    return [text[i:i + 3] for i in range(len(text) - 2)]

def trigram_bucket(gram: str, dim: int) -> int:
    return int(hashlib.md5(gram.encode('utf-8')).hexdigest(), 16) % dim

def stub_embed(text: str, dim: int = 256) -> np.ndarray:
    """Hashed bag of character trigrams, L2-normalized."""
    vec = np.zeros(dim, dtype=np.float64)
    for gram in char_trigrams(text):
        vec[trigram_bucket(gram, dim)] += 1.0
    return vec / np.linalg.norm(vec)

def embed_text(endpoint: EndpointConfig, text: str, cache: Optional[JsonlCache] = None, client=None) -> np.ndarray:
    r"""Embed one text with the remote embeddings endpoint, or the trigram stub offline.

    Results are cached by a digest of (mode, model, text).
    """
    if text is None or len(text.strip()) == 0:
        raise ContractError("Cannot embed an empty text.")
    model = f'stub-{endpoint.embed_dim}' if endpoint.offline else endpoint.embed_model
    digest = text_digest(f'{endpoint.mode}\x00{model}\x00{text}')
    if cache is not None and digest in cache:
        return np.asarray(cache.get(digest)['vector'], dtype=np.float64)

    if endpoint.offline:
        vec = stub_embed(text, endpoint.embed_dim)
    else:
        vec = np.asarray(remote_embedding(endpoint, text, client=client), dtype=np.float64)
        norm = np.linalg.norm(vec)
        if not np.isfinite(norm) or norm <= 0:
            raise ValidationError("The embeddings endpoint returned a zero or non-finite vector.")
        vec = vec / norm
    if cache is not None:
        cache.put({'digest': digest, 'vector': vec.tolist()})
    return vec
