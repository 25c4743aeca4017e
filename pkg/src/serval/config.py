"""Pipeline configuration: TOML file, env-var secrets, dataset registry."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import MetricSpec
from .describe import PromptTemplate, VlmEndpointConfig
from .encode import EncoderConfig
from .errors import ConfigError

VLM_API_KEY_ENV = "SERVAL_VLM_API_KEY"
ENCODER_API_KEY_ENV = "SERVAL_ENCODER_API_KEY"

#: ViDoRe-v2 dataset registry: short name -> HuggingFace collection path.
#: Users point [datasets.<name>] at local BEIR-format exports of these.
DATASET_ABBREVIATIONS = {
    "RERB": "vidore/restaurant_esg_reports_beir",
    "SAXA": "vidore/synthetic_axa_filtered_v1.0",
    "SAXAM": "vidore/synthetic_axa_filtered_v1.0_multilingual",
    "SEME": "vidore/synthetic_economics_macro_economy_2024_filtered_v1.0",
    "SMBTI": "vidore/synthetic_mit_biomedical_tissue_interactions_unfiltered",
    "SMBTIM": "vidore/synthetic_mit_biomedical_tissue_interactions_unfiltered_multilingual",
    "SRS": "vidore/synthetic_rse_restaurant_filtered_v1.0",
    "SRSM": "vidore/synthetic_rse_restaurant_filtered_v1.0_multilingual",
    "SEMEM": "vidore/synthetics_economics_macro_economy_2024_filtered_v1.0_multilingual",
}


@dataclass(frozen=True)
class DatasetPaths:
    corpus: Path
    queries: Path
    qrels: Path


@dataclass
class PipelineConfig:
    vlm: VlmEndpointConfig
    encoder: EncoderConfig
    prompt: PromptTemplate
    cache_dir: Path
    index_dir: Path
    datasets: dict[str, DatasetPaths] = field(default_factory=dict)
    metrics: MetricSpec = MetricSpec()
    top_k_retrieve: int = 100

    def __post_init__(self):
        if self.top_k_retrieve < self.metrics.max_cutoff:
            raise ConfigError(
                f"top_k_retrieve ({self.top_k_retrieve}) must be >= the largest "
                f"metric cutoff ({self.metrics.max_cutoff})"
            )

    def dataset(self, name: str) -> DatasetPaths:
        try:
            return self.datasets[name]
        except KeyError:
            raise ConfigError(
                f"dataset {name!r} not configured; known: {sorted(self.datasets)}"
            ) from None

    def run_tag(self) -> str:
        return f"{self.vlm.model_id}+{self.encoder.model_id}"


def load_config(
    path: str | Path,
    env: Mapping[str, str] | None = None,
    overrides: list[str] | None = None,
) -> PipelineConfig:
    """Parse a TOML config file; relative paths resolve against its directory.

    ``overrides`` are ``dotted.key=value`` strings (the CLI's repeatable
    ``--set``) applied on top of the file. ``SERVAL_VLM_API_KEY`` /
    ``SERVAL_ENCODER_API_KEY`` override any keys in the file, so secrets
    never need to live on disk.
    """
    path = Path(path)
    env = os.environ if env is None else env
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    for item in overrides or []:
        _apply_override(raw, item)

    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    try:
        vlm_raw = dict(raw.get("vlm", {}))
        vlm_raw.setdefault("api_key", None)
        if env.get(VLM_API_KEY_ENV):
            vlm_raw["api_key"] = env[VLM_API_KEY_ENV]
        vlm = VlmEndpointConfig(**vlm_raw)

        enc_raw = dict(raw.get("encoder", {}))
        enc_raw.setdefault("api_key", None)
        if env.get(ENCODER_API_KEY_ENV):
            enc_raw["api_key"] = env[ENCODER_API_KEY_ENV]
        for key in ("sparse_doc_vectors", "sparse_query_vectors"):
            if enc_raw.get(key):
                enc_raw[key] = resolve(enc_raw[key])
        encoder = EncoderConfig(**enc_raw)

        prompt = PromptTemplate(**raw.get("prompt", {}))
        metrics = MetricSpec(cutoffs=tuple(raw.get("metrics", {}).get("cutoffs", (1, 5, 10))))

        datasets = {}
        for name, paths in raw.get("datasets", {}).items():
            datasets[name] = DatasetPaths(
                corpus=resolve(paths["corpus"]),
                queries=resolve(paths["queries"]),
                qrels=resolve(paths["qrels"]),
            )

        return PipelineConfig(
            vlm=vlm,
            encoder=encoder,
            prompt=prompt,
            cache_dir=resolve(raw.get("cache_dir", "cache")),
            index_dir=resolve(raw.get("index_dir", "indexes")),
            datasets=datasets,
            metrics=metrics,
            top_k_retrieve=int(raw.get("top_k_retrieve", 100)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def _apply_override(raw: dict, item: str) -> None:
    """Apply one ``dotted.key=value`` override onto the raw TOML tree."""
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects dotted.key=value, got {item!r}")
    try:
        # Parse through TOML so values keep their types (ints, bools, arrays).
        typed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        typed = value
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key!r}: {part!r} is not a table")
    node[parts[-1]] = typed
