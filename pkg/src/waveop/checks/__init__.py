"""Verification pipelines run by ``waveop verify all``."""

from importlib import resources

import yaml

from waveop.config import PotentialConfig
from waveop.errors import ConfigInvalid

CORPUS_RESOURCE = "corpus.yaml"


def default_corpus() -> list[PotentialConfig]:
    """The packaged 10-potential corpus."""
    text = resources.files(__package__).joinpath(CORPUS_RESOURCE).read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    try:
        return [PotentialConfig.model_validate(entry) for entry in data.get("potentials", [])]
    except ValueError as e:
        raise ConfigInvalid(f"packaged corpus is invalid: {e}", field="corpus") from e
