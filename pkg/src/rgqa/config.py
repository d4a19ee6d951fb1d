"""TOML run configuration.

Sections: ``[run]``, ``[gateway]``, ``[retrieval]``, ``[backends.<alias>]`` and
``[roles.<role>]``. Relative paths resolve against the config file's
directory. Backend secrets come from the environment:
``RGQA_<ALIAS>_BASE_URL`` / ``RGQA_<ALIAS>_API_KEY`` override the file, and
``api_key_env`` names another variable to read the key from.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cache import ResponseCache
from .corpus import CorpusStore
from .data import Question, load_dataset
from .harness import RunConfig
from .kgcc import MAX_POINTS, load_demonstrations
from .llm import ROLES, Gateway, OpenAIChatBackend, RoleConfig, ScriptedBackend
from .pipeline import RETRIEVAL_MODES, Pipeline
from .retrieval import HttpReranker, IndexConfig, LexicalReranker, SourceIndexes, build_index


class ConfigError(ValueError):
    pass


@dataclass
class Settings:
    path: Path
    run: dict[str, Any] = field(default_factory=dict)
    gateway: dict[str, Any] = field(default_factory=dict)
    retrieval: dict[str, Any] = field(default_factory=dict)
    backends: dict[str, dict[str, Any]] = field(default_factory=dict)
    roles: dict[str, dict[str, Any]] = field(default_factory=dict)

    def resolve(self, value: str | None) -> Path | None:
        if not value:
            return None
        p = Path(value).expanduser()
        return p if p.is_absolute() else (self.path.parent / p)


def load_settings(path: str | Path, overrides: dict[str, Any] | None = None) -> Settings:
    path = Path(path)
    with path.open("rb") as fh:
        raw = tomllib.load(fh)
    unknown = set(raw) - {"run", "gateway", "retrieval", "backends", "roles"}
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    bad_roles = set(raw.get("roles", {})) - set(ROLES)
    if bad_roles:
        raise ConfigError(f"{path}: unknown role(s) {sorted(bad_roles)}")
    settings = Settings(path, raw.get("run", {}), raw.get("gateway", {}), raw.get("retrieval", {}),
                        raw.get("backends", {}), raw.get("roles", {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            settings.run[key] = value
    return settings


def index_config(settings: Settings) -> IndexConfig:
    r = settings.retrieval
    return IndexConfig(
        k1=float(r.get("k1", 0.9)),
        b=float(r.get("b", 0.4)),
        per_source_k=int(r.get("per_source_k", 32)),
        final_k=int(r.get("final_k", 5)),
    )


def make_backend(alias: str, spec: dict[str, Any], settings: Settings):
    kind = spec.get("type", "openai")
    if kind == "scripted":
        fixtures = settings.resolve(spec.get("fixtures"))
        if fixtures is None:
            raise ConfigError(f"backend {alias!r}: scripted backend needs 'fixtures'")
        return ScriptedBackend.from_file(fixtures, name=alias)
    if kind == "openai":
        prefix = f"RGQA_{alias.upper().replace('-', '_')}_"
        base = os.environ.get(prefix + "BASE_URL") or spec.get("base_url")
        if not base:
            raise ConfigError(f"backend {alias!r}: set base_url or {prefix}BASE_URL")
        key = os.environ.get(prefix + "API_KEY")
        if key is None and spec.get("api_key_env"):
            key = os.environ.get(spec["api_key_env"])
        return OpenAIChatBackend(base, key, name=alias, timeout=float(spec.get("timeout", 120)))
    raise ConfigError(f"backend {alias!r}: unknown type {kind!r}")


def make_gateway(settings: Settings) -> Gateway:
    specs = settings.backends or {"default": {"type": "openai"}}
    backends = {alias: make_backend(alias, spec, settings) for alias, spec in specs.items()}
    first = next(iter(backends))
    roles = {}
    for role in ROLES:
        spec = settings.roles.get(role, {})
        roles[role] = RoleConfig(
            role,
            model=spec.get("model", settings.gateway.get("model", "mock")),
            temperature=spec.get("temperature"),
            max_tokens=spec.get("max_tokens"),
            backend=spec.get("backend", first),
        )
    cache_dir = settings.resolve(settings.run.get("cache_dir"))
    g = settings.gateway
    return Gateway(
        backends,
        roles,
        cache=ResponseCache(cache_dir) if cache_dir else None,
        retries=int(g.get("retries", 2)),
        backoff=float(g.get("backoff", 0.5)),
        max_in_flight=int(g.get("max_in_flight", 8)),
        rate_limits={alias: float(spec.get("rate_limit", 0)) for alias, spec in specs.items()},
    )


def make_reranker(settings: Settings):
    r = settings.retrieval
    kind = r.get("reranker", "lexical")
    if kind == "lexical":
        return LexicalReranker()
    if kind == "http":
        url = os.environ.get("RGQA_RERANKER_URL") or r.get("reranker_url")
        if not url:
            raise ConfigError("http reranker needs reranker_url or RGQA_RERANKER_URL")
        cache_dir = settings.resolve(settings.run.get("cache_dir"))
        return HttpReranker(
            url,
            timeout=float(r.get("reranker_timeout", 30)),
            retries=int(r.get("reranker_retries", 2)),
            max_in_flight=int(r.get("reranker_max_in_flight", 4)),
            cache=ResponseCache(cache_dir / "rerank") if cache_dir else None,
        )
    raise ConfigError(f"unknown reranker {kind!r}")


def load_indexes(settings: Settings) -> SourceIndexes | None:
    cfg = index_config(settings)
    index_path = settings.resolve(settings.run.get("index"))
    if index_path and index_path.exists():
        indexes = SourceIndexes.load(index_path)
        indexes.config = cfg
        return indexes
    corpus_dir = settings.resolve(settings.run.get("corpus_dir"))
    if corpus_dir is None:
        return None
    store = CorpusStore(corpus_dir)
    return build_index(store.iter_snippets(), cfg, store.sources)


def build(settings: Settings) -> tuple[RunConfig, Pipeline, list[Question]]:
    run = settings.run
    mode = run.get("mode", "full")
    dataset = settings.resolve(run.get("dataset"))
    if dataset is None:
        raise ConfigError("[run] dataset is required")
    questions = load_dataset(dataset, run.get("format", "canonical"), dataset=run.get("dataset_name"),
                             expected_count=run.get("expected_count"))
    indexes = load_indexes(settings) if mode in RETRIEVAL_MODES else None
    if mode in RETRIEVAL_MODES and indexes is None:
        raise ConfigError(f"mode {mode!r} needs [run] corpus_dir or index")
    demos_path = settings.resolve(run.get("demonstrations"))
    pipeline = Pipeline(
        gateway=make_gateway(settings),
        indexes=indexes,
        reranker=make_reranker(settings),
        final_k=index_config(settings).final_k,
        max_points=int(run.get("max_knowledge_points", MAX_POINTS)),
        demos=load_demonstrations(demos_path) if demos_path else (),
        refill_budget=run.get("refill_budget"),
    )
    out_dir = settings.resolve(run.get("output_dir")) or Path("runs") / mode
    config = RunConfig(mode=mode, output_dir=str(out_dir), concurrency=int(run.get("concurrency", 4)),
                       limit=run.get("limit") or None)
    return config, pipeline, questions
