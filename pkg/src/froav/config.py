"""Platform configuration and runtime wiring.

One JSON config file describes the whole deployment: providers, the judge
lineup, chunking, retrieval, and data directory. String values of the form
"${VAR}" are interpolated from the environment at load time (intended for
secrets); FROAV_DATA_DIR overrides the configured data directory.

The packaged defaults run entirely on deterministic mock providers, so a
fresh checkout works with no credentials.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .ingest import ChunkingConfig, ExtractorConfig
from .judge import DimensionSpec, load_dimension_specs
from .providers import ProviderConfig, ProviderRegistry
from .rag import DEFAULT_PROMPT_TEMPLATE, DEFAULT_RETRIEVAL_K
from .storage import Store
from .vector_store import VectorStore
from .workflow import WorkflowDef

DATA_DIR_ENV = "FROAV_DATA_DIR"
BIND_ENV = "FROAV_BIND"
ADMIN_TOKEN_ENV = "FROAV_ADMIN_TOKEN"
UI_DIR_ENV = "FROAV_UI_DIR"

DEFAULT_BIND = "127.0.0.1:8800"

_ENV_PATTERN = re.compile(r"^\$\{([A-Za-z_][A-Za-z0-9_]*)\}$")


@dataclass
class PlatformConfig:
    data_dir: str
    providers: list[ProviderConfig]
    judge_lineup: list[str]
    generator: str
    embedder: str
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    parallelism: int = 4
    extractor: ExtractorConfig | None = None
    dimensions_dir: str | None = None
    prompt_template_path: str | None = None

    def __post_init__(self):
        names = {p.name for p in self.providers}
        if not self.judge_lineup:
            raise ValueError("judge_lineup must be non-empty")
        for name in [*self.judge_lineup, self.generator, self.embedder]:
            if name not in names:
                raise ValueError(f"config references unknown provider {name!r}")


def _interpolate(value):
    if isinstance(value, str):
        match = _ENV_PATTERN.match(value)
        if match:
            var = match.group(1)
            if var not in os.environ:
                raise ValueError(f"config references unset environment variable {var!r}")
            return os.environ[var]
        return value
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    return value


def _default_config_dict() -> dict:
    text = resources.files("froav").joinpath("defaults/config.json").read_text("utf-8")
    return json.loads(text)


def load_config(path: str | Path | None = None) -> PlatformConfig:
    """Load a config file (or the packaged defaults) into a PlatformConfig."""
    if path is None:
        data = _default_config_dict()
    else:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    data = _interpolate(data)

    providers = [ProviderConfig(**p) for p in data.get("providers", [])]
    chunking = ChunkingConfig(**data.get("chunking", {}))
    extractor_data = data.get("extractor")
    extractor = None
    if extractor_data:
        extractor = ExtractorConfig(
            command=tuple(extractor_data["command"]) if extractor_data.get("command") else None,
            url=extractor_data.get("url"),
            timeout=extractor_data.get("timeout", 60.0),
        )

    data_dir = os.environ.get(DATA_DIR_ENV) or data.get("data_dir") or "./froav_data"
    return PlatformConfig(
        data_dir=data_dir,
        providers=providers,
        judge_lineup=list(data.get("judge_lineup", [])),
        generator=data.get("generator", ""),
        embedder=data.get("embedder", ""),
        chunking=chunking,
        retrieval_k=data.get("retrieval_k", DEFAULT_RETRIEVAL_K),
        parallelism=data.get("parallelism", 4),
        extractor=extractor,
        dimensions_dir=data.get("dimensions_dir"),
        prompt_template_path=data.get("prompt_template"),
    )


def _slug(value: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", value)


def load_packaged_workflow(name: str) -> WorkflowDef:
    text = resources.files("froav").joinpath(f"defaults/workflows/{name}.json").read_text("utf-8")
    return WorkflowDef.from_dict(json.loads(text))


class Platform:
    """Shared runtime state: entity store, provider clients, vector stores, workflows."""

    def __init__(self, config: PlatformConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.entities = Store(self.data_dir)
        self.providers = ProviderRegistry.from_configs(config.providers)
        self.dimension_specs = self._load_dimensions()
        self.prompt_template = self._load_prompt_template()
        self.workflows: dict[str, WorkflowDef] = {}
        self._vstores: dict[str, VectorStore] = {}
        self._vstore_lock = threading.Lock()
        self.register_workflow(load_packaged_workflow("rag_judge"))

    # -- dimension specs / prompt -----------------------------------------------

    def _load_dimensions(self) -> list[DimensionSpec]:
        payloads = []
        if self.config.dimensions_dir:
            for p in sorted(Path(self.config.dimensions_dir).glob("*.json")):
                payloads.append(json.loads(p.read_text(encoding="utf-8")))
        else:
            base = resources.files("froav").joinpath("defaults/dimensions")
            for p in sorted(base.iterdir(), key=lambda x: x.name):
                if p.name.endswith(".json"):
                    payloads.append(json.loads(p.read_text("utf-8")))
        return load_dimension_specs(payloads)

    def _load_prompt_template(self) -> str:
        if self.config.prompt_template_path:
            return Path(self.config.prompt_template_path).read_text(encoding="utf-8")
        return DEFAULT_PROMPT_TEMPLATE

    # -- workflows ---------------------------------------------------------------

    def register_workflow(self, defn: WorkflowDef) -> None:
        self.workflows[defn.id] = defn

    def resolve_workflow(self, ref: str) -> WorkflowDef:
        """Accept a workflow id or a path to a workflow JSON file."""
        if ref in self.workflows:
            return self.workflows[ref]
        path = Path(ref)
        if path.exists():
            defn = WorkflowDef.from_file(path)
            self.register_workflow(defn)
            return defn
        stored = self.entities.get("workflow", ref)
        if stored is not None:
            defn = WorkflowDef.from_dict(stored)
            self.register_workflow(defn)
            return defn
        raise KeyError(f"unknown workflow {ref!r}")

    # -- vector stores -------------------------------------------------------------

    def _vstore_dir(self, embedder_model_id: str) -> Path:
        return self.data_dir / "vectors" / _slug(embedder_model_id)

    def vector_store_for(
        self, embedder_model_id: str, dimension: int | None = None
    ) -> VectorStore:
        """Load (or lazily create) the single store for one embedding space."""
        with self._vstore_lock:
            store = self._vstores.get(embedder_model_id)
            if store is None:
                path = self._vstore_dir(embedder_model_id)
                if (path / "manifest.json").exists():
                    store = VectorStore.load(path)
                elif dimension is not None:
                    store = VectorStore(dimension, embedder_model_id)
                else:
                    raise KeyError(
                        f"no vector store on disk for embedder {embedder_model_id!r}"
                    )
                self._vstores[embedder_model_id] = store
            return store

    def save_vector_store(self, embedder_model_id: str) -> Path:
        with self._vstore_lock:
            store = self._vstores[embedder_model_id]
        path = self._vstore_dir(embedder_model_id)
        store.save(path)
        return path

    def close(self) -> None:
        self.entities.close()
