"""Pluggable clients for the external capabilities the engine needs:
text/image embedding, proxy generation for a prompt, LLM prompt mutation,
and hierarchy node naming.

Each capability has a deterministic mock (pure function of input + seed)
and an HTTP client speaking one JSON envelope:
POST {endpoint}/v1/{capability} with {"capability", "payload", "request_id"},
answered by {"result": ...}.
"""

from __future__ import annotations

import hashlib
import uuid
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import (
    BadResponse,
    InvalidTemplateFromProvider,
    ProviderError,
    ProviderUnreachable,
)
from .prompts import PromptTemplate, parse_groups, replace_group, validate_template

SPREAD_TOKEN = "diverse"  # its presence in a template widens mock generations

ADJECTIVE_LEXICON = ("bright", "playful", "fluffy", "sleepy", "vivid", "calm",
                     "curious", "tiny", "majestic", "gentle", "diverse")
SCENE_LEXICON = ("in a sunny garden", "on a wooden floor", "by the window",
                 "in the snow", "on the grass", "near a lake", "under soft light",
                 "on a city street")


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"  # "mock" | "http"
    endpoint: str | None = None
    timeout: float = 10.0
    seed: int | None = 0
    retry: int = 1
    dim: int = 32

    def __post_init__(self):
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http provider requires an endpoint")
        if self.kind == "mock" and self.seed is None:
            raise ValueError("mock provider requires a seed")
        if self.kind not in ("mock", "http"):
            raise ValueError(f"unknown provider kind '{self.kind}'")


def provider_config_from_env(base: ProviderConfig | None = None) -> ProviderConfig:
    """Overlay DATASTEER_PROVIDER_* environment variables on a config.

    DATASTEER_PROVIDER_ENDPOINT switches the kind to http; _TIMEOUT and
    _RETRY tune the client. Explicit config fields win only where no env var
    is set.
    """
    import os
    from dataclasses import replace

    cfg = base or ProviderConfig()
    endpoint = os.environ.get("DATASTEER_PROVIDER_ENDPOINT")
    if endpoint:
        cfg = replace(cfg, kind="http", endpoint=endpoint)
    timeout = os.environ.get("DATASTEER_PROVIDER_TIMEOUT")
    if timeout:
        cfg = replace(cfg, timeout=float(timeout))
    retry = os.environ.get("DATASTEER_PROVIDER_RETRY")
    if retry:
        cfg = replace(cfg, retry=int(retry))
    return cfg


def stable_hash(*parts) -> int:
    """Deterministic 64-bit hash of the string forms of `parts`."""
    joined = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(joined.encode("utf-8")).digest()[:8], "big")


def _hash_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stable_hash(*parts)))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / max(np.linalg.norm(v), 1e-12)


# -- mocks -----------------------------------------------------------------

class MockEmbeddingProvider:
    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed(self, items) -> np.ndarray:
        if not items:
            raise ValueError("embed() requires a nonempty input")
        rows = [_unit(_hash_rng("embed", self.seed, item).standard_normal(self.dim))
                for item in items]
        return np.array(rows)


class MockGenerationProvider:
    """Samples proxy embeddings around a centroid built from the prompt's
    tokens: each token hashes to a fixed unit direction and the centroid is
    their normalized mean, so editing the prompt steers the output."""

    def __init__(self, dim: int, seed: int = 0, base_spread: float = 0.12,
                 wide_spread: float = 0.35):
        self.dim = dim
        self.seed = seed
        self.base_spread = base_spread
        self.wide_spread = wide_spread

    def token_direction(self, token: str) -> np.ndarray:
        return _unit(_hash_rng("gen-token", self.seed, token.lower()).standard_normal(self.dim))

    def centroid_of(self, prompt: PromptTemplate) -> np.ndarray:
        tokens = sorted(set(prompt.tokens()))
        if not tokens:
            return _unit(_hash_rng("gen-empty", self.seed).standard_normal(self.dim))
        return _unit(np.mean([self.token_direction(t) for t in tokens], axis=0))

    def generate_proxies(self, prompt: PromptTemplate, count: int, seed: int = 0) -> np.ndarray:
        if count == 0:
            return np.zeros((0, self.dim))
        centroid = self.centroid_of(prompt)
        spread = self.wide_spread if SPREAD_TOKEN in prompt.tokens() else self.base_spread
        rng = _hash_rng("gen", self.seed, seed, prompt.text)
        return centroid[None, :] + spread * rng.standard_normal((count, self.dim))


class MockMutationProvider:
    """Seeded single edit from a fixed rule set: swap two options in a group,
    add a lexicon option, drop an option, or reword the scene clause."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def mutate(self, prompt: PromptTemplate, seed: int = 0) -> PromptTemplate:
        rng = _hash_rng("mutate", self.seed, seed, prompt.text)
        groups = parse_groups(prompt.text)
        rules = ["add", "reword"]
        if groups:
            rules.append("swap")
            if any(len(g) >= 2 for g in groups):
                rules.append("drop")
        rule = str(rng.choice(sorted(rules)))
        text = prompt.text

        if rule == "swap" and groups:
            gi = int(rng.integers(len(groups)))
            opts = list(groups[gi])
            if len(opts) >= 2:
                i, j = rng.choice(len(opts), size=2, replace=False)
                opts[i], opts[j] = opts[j], opts[i]
                text = replace_group(text, gi, opts)
            else:
                rule = "add"
        if rule == "add":
            fresh = [w for w in ADJECTIVE_LEXICON
                     if w not in prompt.tokens()]
            word = str(rng.choice(fresh)) if fresh else str(rng.choice(ADJECTIVE_LEXICON))
            if groups:
                gi = int(rng.integers(len(groups)))
                text = replace_group(text, gi, list(groups[gi]) + [word])
            else:
                text = f"[{word}] " + text
        elif rule == "drop":
            droppable = [i for i, g in enumerate(groups) if len(g) >= 2]
            gi = int(rng.choice(droppable))
            opts = list(groups[gi])
            opts.pop(int(rng.integers(len(opts))))
            text = replace_group(text, gi, opts)
        elif rule == "reword":
            scene = str(rng.choice(SCENE_LEXICON))
            if "," in text:
                text = text[:text.rindex(",")] + ", " + scene
            else:
                text = text + ", " + scene

        return prompt.with_text(text)


class MockNamingProvider:
    def name_group(self, members) -> str:
        """Join the two most frequent member label texts with '/'."""
        if not members:
            raise ProviderError("no members to name")
        ranked = sorted(members, key=lambda tf: (-tf[1], tf[0]))
        return "/".join(t for t, _ in ranked[:2])


class FailingNamingProvider:
    """Test double for provider outages."""

    def name_group(self, members) -> str:
        raise ProviderUnreachable("naming provider is down")


# -- HTTP clients ------------------------------------------------------------

class _HttpBase:
    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(base_url=config.endpoint, timeout=config.timeout,
                                    transport=transport)

    def _post(self, capability: str, payload: dict) -> dict:
        envelope = {"capability": capability, "payload": payload,
                    "request_id": str(uuid.uuid4())}
        last_exc: Exception | None = None
        for _ in range(self.config.retry + 1):
            try:
                resp = self._client.post(f"/v1/{capability}", json=envelope)
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                last_exc = BadResponse(f"{capability} returned HTTP {resp.status_code}")
                continue
            try:
                body = resp.json()
            except ValueError as exc:
                last_exc = BadResponse(f"{capability} returned non-JSON body")
                continue
            if "result" not in body:
                last_exc = BadResponse(f"{capability} response lacks 'result'")
                continue
            return body["result"]
        if isinstance(last_exc, BadResponse):
            raise last_exc
        raise ProviderUnreachable(f"{capability} unreachable: {last_exc}")


class HttpEmbeddingProvider(_HttpBase):
    def __init__(self, config: ProviderConfig, transport=None):
        super().__init__(config, transport)
        self.dim = config.dim

    def embed(self, items) -> np.ndarray:
        if not items:
            raise ValueError("embed() requires a nonempty input")
        result = self._post("embed", {"items": list(items), "dim": self.dim})
        vectors = np.asarray(result.get("vectors", []), dtype=float)
        if vectors.shape != (len(items), self.dim):
            raise BadResponse(
                f"embed returned shape {vectors.shape}",
                expected=(len(items), self.dim), actual=tuple(vectors.shape))
        return vectors


class HttpGenerationProvider(_HttpBase):
    def __init__(self, config: ProviderConfig, transport=None):
        super().__init__(config, transport)
        self.dim = config.dim

    def generate_proxies(self, prompt: PromptTemplate, count: int, seed: int = 0) -> np.ndarray:
        if count == 0:
            return np.zeros((0, self.dim))
        result = self._post("generate", {"template": prompt.text, "class": prompt.class_name,
                                         "count": count, "seed": seed, "dim": self.dim})
        vectors = np.asarray(result.get("vectors", []), dtype=float)
        if vectors.shape != (count, self.dim):
            raise BadResponse(f"generate returned shape {vectors.shape}",
                              expected=(count, self.dim), actual=tuple(vectors.shape))
        return vectors


class HttpMutationProvider(_HttpBase):
    def mutate(self, prompt: PromptTemplate, seed: int = 0) -> PromptTemplate:
        for _ in range(self.config.retry + 1):
            result = self._post("mutate", {"template": prompt.text,
                                           "class": prompt.class_name, "seed": seed})
            text = result.get("template")
            try:
                validate_template(text or "")
                return prompt.with_text(text)
            except Exception:
                continue
        raise InvalidTemplateFromProvider(f"mutation service kept returning invalid templates")


class HttpNamingProvider(_HttpBase):
    def name_group(self, members) -> str:
        result = self._post("name", {"members": [[t, int(f)] for t, f in members]})
        name = result.get("name")
        if not isinstance(name, str) or not name:
            raise BadResponse("name response lacks a usable 'name'")
        return name


@dataclass(frozen=True)
class Providers:
    embedder: object
    generator: object
    mutator: object
    namer: object


def make_providers(config: ProviderConfig, transport=None) -> Providers:
    if config.kind == "mock":
        return Providers(
            embedder=MockEmbeddingProvider(config.dim, config.seed),
            generator=MockGenerationProvider(config.dim, config.seed),
            mutator=MockMutationProvider(config.seed),
            namer=MockNamingProvider(),
        )
    return Providers(
        embedder=HttpEmbeddingProvider(config, transport),
        generator=HttpGenerationProvider(config, transport),
        mutator=HttpMutationProvider(config, transport),
        namer=HttpNamingProvider(config, transport),
    )
