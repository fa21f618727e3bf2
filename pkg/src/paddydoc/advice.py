"""Per-disease recommendation catalog shown to the farmer after a
prediction. The bundled catalog is editable app data, not a model output."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .data import CLASS_NAMES
from .errors import CatalogError, CatalogValidationError

CATALOG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Advice:
    class_name: str
    title: str
    summary: str
    actions: tuple
    source_note: str

    def to_dict(self) -> dict:
        return {
            "class_name": self.class_name,
            "title": self.title,
            "summary": self.summary,
            "actions": list(self.actions),
            "source_note": self.source_note,
        }


class RecommendationCatalog:
    def __init__(self, entries: dict):
        self.entries = entries

    def for_class(self, class_name: str) -> Advice:
        try:
            return self.entries[class_name]
        except KeyError:
            raise CatalogError(
                f"no recommendation for class {class_name!r}; "
                f"catalog covers {sorted(self.entries)}"
            ) from None

    def __len__(self) -> int:
        return len(self.entries)


def _validate_payload(payload: dict) -> RecommendationCatalog:
    if payload.get("schema_version") != CATALOG_SCHEMA_VERSION:
        raise CatalogValidationError(
            f"unsupported catalog schema_version {payload.get('schema_version')!r}"
        )
    entries: dict = {}
    for item in payload.get("entries", []):
        name = item.get("class_name")
        if name in entries:
            raise CatalogValidationError(f"duplicate catalog entry for class {name!r}")
        try:
            entries[name] = Advice(
                class_name=name,
                title=item["title"],
                summary=item["summary"],
                actions=tuple(item["actions"]),
                source_note=item["source_note"],
            )
        except KeyError as exc:
            raise CatalogValidationError(f"catalog entry {name!r} missing field {exc}") from None
    missing = [name for name in CLASS_NAMES if name not in entries]
    if missing:
        raise CatalogValidationError(f"catalog missing classes: {missing}")
    extras = [name for name in entries if name not in CLASS_NAMES]
    if extras:
        raise CatalogValidationError(f"catalog has entries for unknown classes: {extras}")
    return RecommendationCatalog(entries)


def load_catalog(path=None) -> RecommendationCatalog:
    """Load and validate a recommendations file; None loads the bundled one."""
    if path is None:
        text = resources.files("paddydoc.resources").joinpath("recommendations.json").read_text(
            encoding="utf-8"
        )
    else:
        path = Path(path)
        if not path.exists():
            raise CatalogValidationError(f"catalog file not found: {path}")
        text = path.read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogValidationError(f"catalog is not valid JSON: {exc}") from exc
    return _validate_payload(payload)


def recommend(class_name: str, catalog: RecommendationCatalog) -> Advice:
    """The unique recommendation entry for a disease class."""
    return catalog.for_class(class_name)
