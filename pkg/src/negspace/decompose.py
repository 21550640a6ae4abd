"""Split captions into an affirmative part and an optional negated part.

Both output captions are phrased affirmatively, so each can be embedded
by a plain text encoder. Two backends: a deterministic rule table, and a
JSON-over-HTTP language-model endpoint with retry plus fallback to the
rules. Results can be cached on disk keyed by the SHA-256 of the caption.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests

from .errors import CacheCorrupt, EmptyCaption, EndpointUnreachable, MalformedReply
from .store import atomic_write_text

__all__ = ["DecomposedCaption", "DecomposerConfig", "decompose",
           "decompose_rules", "decompose_remote", "cache_lookup",
           "cache_lookup_or_insert", "ENDPOINT_ENV", "TOKEN_ENV"]

log = logging.getLogger(__name__)

ENDPOINT_ENV = "SPACEVLM_LLM_ENDPOINT"
TOKEN_ENV = "SPACEVLM_LLM_TOKEN"

BACKEND_RULES = "rules"
BACKEND_REMOTE = "remote"
BACKEND_CACHE = "cache"

# Ordered: multi-word cues must win over their substrings ("but not" over "not").
CUES = (
    "but not",
    "but no",
    "and not",
    "does not show",
    "do not",
    "not",
    "without",
    "with no",
    "excluding",
    "no",
)

_CUE_PATTERNS = [(cue, re.compile(r"\b" + re.escape(cue) + r"\b", re.IGNORECASE))
                 for cue in CUES]

_ARTICLES = ("a ", "an ", "the ")
_TEMPLATES = ("a photo", "an image", "a picture", "this is",
              "this image", "the image", "this photo", "the photo")
_DEPICTION_VERBS = ("shows", "showing", "show", "depicts", "depicting",
                    "features", "featuring", "contains", "includes", "is", "are")
_DROP_PREPOSITIONS = ("on", "in", "at", "of", "with", "near", "by",
                      "under", "over", "behind", "inside", "outside")

FALLBACK_AFFIRMATIVE = "This is a photo"
TEMPLATE_PREFIX = "A photo of "


@dataclass(frozen=True)
class DecomposedCaption:
    original: str
    affirmative: str
    negated: Optional[str]
    backend: str

    def to_dict(self) -> dict:
        return {"original": self.original, "affirmative": self.affirmative,
                "negated": self.negated, "backend": self.backend}

    @classmethod
    def from_dict(cls, d: dict) -> "DecomposedCaption":
        return cls(original=d["original"], affirmative=d["affirmative"],
                   negated=d.get("negated"), backend=d.get("backend", BACKEND_RULES))


@dataclass
class DecomposerConfig:
    backend: str = BACKEND_RULES
    endpoint: Optional[str] = None
    auth_token: Optional[str] = None
    cache_path: Optional[Path] = None
    timeout: float = 10.0
    retries: int = 2
    fallback_to_rules: bool = True
    max_concurrency: int = 4
    _semaphore: threading.Semaphore = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.endpoint is None:
            self.endpoint = os.environ.get(ENDPOINT_ENV)
        if self.auth_token is None:
            self.auth_token = os.environ.get(TOKEN_ENV)
        self._semaphore = threading.Semaphore(max(1, self.max_concurrency))


def _first_cue(text: str):
    """First cue by table order; within a cue, its first occurrence."""
    for cue, pat in _CUE_PATTERNS:
        m = pat.search(text)
        if m:
            return cue, m
    return None, None


def _starts_with_any(text: str, prefixes) -> bool:
    low = text.lower()
    return any(low.startswith(p) for p in prefixes)


def _has_depiction_verb(text: str) -> bool:
    words = set(re.findall(r"[a-z']+", text.lower()))
    return any(v in words for v in _DEPICTION_VERBS)


def _capitalize(text: str) -> str:
    return text[:1].upper() + text[1:] if text else text


def _affirmative_part(left: str) -> str:
    left = left.strip().strip(",;")
    if not left:
        return FALLBACK_AFFIRMATIVE
    if _starts_with_any(left, _TEMPLATES) or _starts_with_any(left, _ARTICLES):
        return left
    if _has_depiction_verb(left):
        return left
    return TEMPLATE_PREFIX + left


def _negated_part(right: str) -> Optional[str]:
    right = right.strip().strip(",;.")
    if not right:
        return None
    first, _, rest = right.partition(" ")
    if first.lower() in _DROP_PREPOSITIONS and rest:
        right = rest
    if _starts_with_any(right, _TEMPLATES):
        return _capitalize(right)
    return TEMPLATE_PREFIX + right


def _affirmatize(caption: str) -> str:
    """Fixed point of rule decomposition: strip cues until none remain."""
    seen = set()
    while caption not in seen:
        seen.add(caption)
        cue, m = _first_cue(caption)
        if m is None:
            return caption
        caption = _decompose_once(caption).affirmative
    return caption


def _decompose_once(caption: str) -> DecomposedCaption:
    cue, m = _first_cue(caption)
    if m is None:
        return DecomposedCaption(caption, caption, None, BACKEND_RULES)
    affirmative = _affirmative_part(caption[:m.start()])
    negated = _negated_part(caption[m.end():])
    if negated is None:
        # dangling cue ("a dog but not"): nothing to negate
        return DecomposedCaption(caption, affirmative, None, BACKEND_RULES)
    return DecomposedCaption(caption, affirmative, negated, BACKEND_RULES)


def decompose_rules(caption: str) -> DecomposedCaption:
    """Rule-table decomposition.

    Scans the ordered cue table (word-boundary, case-insensitive, first
    table entry that matches wins) and splits at the cue. Cue-free
    captions pass through untouched. Both outputs are driven to their
    cue-free fixed point so they are themselves affirmative.
    """
    if not caption or not caption.strip():
        raise EmptyCaption("caption is empty")
    out = _decompose_once(caption)
    if out.negated is None and out.affirmative == caption:
        return out
    return DecomposedCaption(
        original=caption,
        affirmative=_affirmatize(out.affirmative),
        negated=None if out.negated is None else _affirmatize(out.negated),
        backend=BACKEND_RULES,
    )


REMOTE_INSTRUCTION = (
    "You split captions for an image-text retrieval system. Given a caption, "
    "separate what must be present (affirmative) from what must be absent "
    "(negated). Phrase both parts as short affirmative captions. Reply with "
    'strict JSON only: {"affirmative": string, "negative": string or null}. '
    "Use null when the caption contains no negation."
)


def _remote_call(caption: str, config: DecomposerConfig) -> DecomposedCaption:
    body = {
        "messages": [
            {"role": "system", "content": REMOTE_INSTRUCTION},
            {"role": "user", "content": caption},
        ],
        "temperature": 0,
    }
    headers = {"Content-Type": "application/json"}
    if config.auth_token:
        headers["Authorization"] = f"Bearer {config.auth_token}"
    with config._semaphore:
        resp = requests.post(config.endpoint, json=body, headers=headers,
                             timeout=config.timeout)
    if resp.status_code != 200:
        raise MalformedReply(f"HTTP {resp.status_code}")
    try:
        reply = resp.json()
    except ValueError as exc:
        raise MalformedReply(f"reply is not JSON: {exc}") from exc
    if not isinstance(reply, dict) or "affirmative" not in reply:
        raise MalformedReply(f"reply missing 'affirmative': {reply!r}")
    affirmative = reply["affirmative"]
    negated = reply.get("negative")
    if not isinstance(affirmative, str) or not affirmative.strip():
        raise MalformedReply("'affirmative' must be a non-empty string")
    if negated is not None and not isinstance(negated, str):
        raise MalformedReply("'negative' must be a string or null")
    return DecomposedCaption(caption, affirmative, negated, BACKEND_REMOTE)


def decompose_remote(caption: str, config: DecomposerConfig) -> DecomposedCaption:
    """Query the remote decomposer, retrying, then fall back to the rules.

    With ``fallback_to_rules`` disabled, exhausted retries raise
    EndpointUnreachable (connection failures) or MalformedReply.
    """
    if not caption or not caption.strip():
        raise EmptyCaption("caption is empty")
    if not config.endpoint:
        raise EndpointUnreachable(
            f"remote backend needs an endpoint (flag or ${ENDPOINT_ENV})")
    last: Exception = EndpointUnreachable("no attempt made")
    for attempt in range(max(1, config.retries + 1)):
        try:
            return _remote_call(caption, config)
        except (requests.RequestException, MalformedReply) as exc:
            last = exc
            log.warning("remote decomposition attempt %d failed: %s", attempt + 1, exc)
    if config.fallback_to_rules:
        log.warning("remote decomposition failed, falling back to rules: %s", last)
        return decompose_rules(caption)
    if isinstance(last, MalformedReply):
        raise last
    raise EndpointUnreachable(str(last)) from last


def _cache_key(caption: str) -> str:
    return hashlib.sha256(caption.encode("utf-8")).hexdigest()


def _load_cache(cache_path) -> dict:
    p = Path(cache_path)
    if not p.exists() or p.stat().st_size == 0:
        return {}
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("cache root is not an object")
        return data
    except (ValueError, OSError) as exc:
        log.warning("%s", CacheCorrupt(f"{p}: {exc}; treating as empty"))
        return {}


def cache_lookup(caption: str, cache_path) -> Optional[DecomposedCaption]:
    entry = _load_cache(cache_path).get(_cache_key(caption))
    return None if entry is None else DecomposedCaption.from_dict(entry)


_cache_write_lock = threading.Lock()


def cache_lookup_or_insert(caption: str, result: DecomposedCaption,
                           cache_path) -> DecomposedCaption:
    """Insert (atomically) and return the cached value for ``caption``.

    An existing entry wins: the stored value is returned unchanged.
    """
    with _cache_write_lock:
        data = _load_cache(cache_path)
        key = _cache_key(caption)
        if key in data:
            return DecomposedCaption.from_dict(data[key])
        data[key] = result.to_dict()
        atomic_write_text(cache_path,
                          json.dumps(data, ensure_ascii=False, indent=2) + "\n")
    return result


def decompose(caption: str, config: Optional[DecomposerConfig] = None) -> DecomposedCaption:
    """Decompose with the configured backend, consulting the cache first."""
    config = config or DecomposerConfig()
    if config.cache_path is not None:
        hit = cache_lookup(caption, config.cache_path)
        if hit is not None:
            return hit
    if config.backend == BACKEND_REMOTE:
        result = decompose_remote(caption, config)
    else:
        result = decompose_rules(caption)
    if config.cache_path is not None:
        result = cache_lookup_or_insert(caption, result, config.cache_path)
    return result
