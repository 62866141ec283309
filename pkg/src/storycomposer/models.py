"""Decomposed story domain model.

A story is held as a :class:`StoryProject` aggregate made of individually
editable components: a seed idea, a storyline, personas, locations, and six
scenes. All model types are plain pydantic values; nothing here mutates in
place, so snapshots can be shared freely between the revision engine, the
link graph, and the API layer.

Structural constraints that would make invalid fixtures unconstructible are
deliberately NOT enforced in the constructors. They live in
:func:`validate_project`, which reports every violation as data.
"""

from __future__ import annotations

import hashlib
import re
import uuid
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

SCHEMA_VERSION = 1
SCENE_COUNT = 6
MIN_ENTITIES = 1
MAX_ENTITIES = 3
TONE_MAX_LEN = 40


class EntityKind(str, Enum):
    persona = "persona"
    location = "location"


class EntityId(BaseModel):
    """Stable identity of a persona or location. Frozen so it can key dicts."""

    model_config = ConfigDict(frozen=True)

    value: str
    kind: EntityKind

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return f"{self.kind.value}:{self.value}"


class SeedIdea(BaseModel):
    text: str
    origin: Literal["user", "ai_suggested"] = "user"

    @field_validator("text")
    @classmethod
    def _non_blank(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("seed text must not be empty")
        return v


class Tone(BaseModel):
    label: str

    @field_validator("label")
    @classmethod
    def _short_non_blank(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("tone label must not be empty")
        if len(v) > TONE_MAX_LEN:
            raise ValueError(f"tone label longer than {TONE_MAX_LEN} characters")
        return v


class Persona(BaseModel):
    id: EntityId
    name: str
    age: str = ""
    clothing: str = ""
    skin: str = ""
    hair: str = ""
    extra: str = ""


class Location(BaseModel):
    id: EntityId
    name: str
    description: str = ""


class Storyline(BaseModel):
    text: str
    tones: list[Tone] = Field(default_factory=list)


class ImageAsset(BaseModel):
    """Opaque reference to a generated image; never carries pixels."""

    model_config = ConfigDict(frozen=True)

    handle: str
    created_from_prompt: str
    provider_tag: str


class Scene(BaseModel):
    index: int
    image_prompt: str = ""
    narration: str = ""
    tones: list[Tone] = Field(default_factory=list)
    image: Optional[ImageAsset] = None
    stale: bool = False
    # Entity ids embedded as metadata when the scene was (re)generated or
    # last propagated to; lets validation catch dangling references after
    # an entity disappears, when name extraction no longer can.
    linked_entities: list[EntityId] = Field(default_factory=list)


class ComponentRef(BaseModel):
    """Addresses one editable component inside a project."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["storyline", "persona", "location", "scene"]
    entity_id: Optional[str] = None
    scene_index: Optional[int] = None
    field: Optional[Literal["image_prompt", "narration"]] = None

    def key(self) -> str:
        if self.kind == "storyline":
            return "storyline"
        if self.kind in ("persona", "location"):
            return f"{self.kind}/{self.entity_id}"
        ref = f"scene/{self.scene_index}"
        if self.field:
            ref += f"/{self.field}"
        return ref

    @classmethod
    def parse(cls, ref: str) -> "ComponentRef":
        parts = ref.strip("/").split("/")
        if parts == ["storyline"]:
            return cls(kind="storyline")
        if len(parts) == 2 and parts[0] in ("persona", "location"):
            return cls(kind=parts[0], entity_id=parts[1])
        if parts[0] == "scene" and len(parts) in (2, 3):
            try:
                index = int(parts[1])
            except ValueError:
                raise ValueError(f"bad scene index in component ref: {ref!r}")
            field = parts[2] if len(parts) == 3 else None
            if field not in (None, "image_prompt", "narration"):
                raise ValueError(f"unknown scene field in component ref: {ref!r}")
            return cls(kind="scene", scene_index=index, field=field)
        raise ValueError(f"unparseable component ref: {ref!r}")


class PropagationResult(BaseModel):
    """What one revision touched downstream of its target."""

    dirty_scenes: list[int] = Field(default_factory=list)
    reassembled_prompts: dict[int, str] = Field(default_factory=dict)
    images_invalidated: list[int] = Field(default_factory=list)
    storyline_touched: bool = False
    # Pre-revision flags, kept so undo can restore them byte-exactly.
    prior_stale: dict[int, bool] = Field(default_factory=dict)
    prior_out_of_sync: bool = False


class Revision(BaseModel):
    id: int
    kind: Literal["edit", "regenerate", "undo"] = "edit"
    target: ComponentRef
    instruction: str
    before: dict
    after: dict
    propagation: PropagationResult = Field(default_factory=PropagationResult)
    timestamp: str = ""
    undone_revision: Optional[int] = None


class StoryProject(BaseModel):
    id: str
    schema_version: int = SCHEMA_VERSION
    status: Literal["seeded", "complete"] = "seeded"
    seed: SeedIdea
    style: str = ""
    storyline: Optional[Storyline] = None
    personas: list[Persona] = Field(default_factory=list)
    locations: list[Location] = Field(default_factory=list)
    scenes: list[Scene] = Field(default_factory=list)
    revisions: list[Revision] = Field(default_factory=list)
    # Set when the storyline was edited without regenerating scenes; the UI
    # shows this as "possibly inconsistent". Scene updates stay user-driven.
    storyline_out_of_sync: bool = False

    def entities(self) -> list[Persona | Location]:
        return [*self.personas, *self.locations]

    def find_entity(self, entity_id: EntityId | str) -> Persona | Location | None:
        value = entity_id.value if isinstance(entity_id, EntityId) else entity_id
        for entity in self.entities():
            if entity.id.value == value:
                return entity
        return None

    def scene(self, index: int) -> Scene | None:
        for scene in self.scenes:
            if scene.index == index:
                return scene
        return None


class Violation(BaseModel):
    rule: str
    message: str
    component: str


class ValidationReport(BaseModel):
    ok: bool
    violations: list[Violation] = Field(default_factory=list)


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or hashlib.sha256(name.encode()).hexdigest()[:8]


def new_entity_id(kind: EntityKind, name: str, taken: set[str]) -> EntityId:
    """Derive a readable, unique id from a display name."""
    base = slugify(name)
    value = base
    n = 2
    while value in taken:
        value = f"{base}-{n}"
        n += 1
    taken.add(value)
    return EntityId(value=value, kind=kind)


def new_project(seed: SeedIdea, project_id: str | None = None) -> StoryProject:
    """Start a project from a seed; every other component stays ungenerated."""
    if not seed.text.strip():
        raise ValueError("seed text must not be empty")
    return StoryProject(id=project_id or uuid.uuid4().hex[:12], seed=seed)


def _mentions_name(text: str, name: str) -> bool:
    pattern = r"(?<!\w)" + re.escape(name) + r"(?!\w)"
    return re.search(pattern, text, re.IGNORECASE) is not None


def validate_project(project: StoryProject) -> ValidationReport:
    """Check every aggregate invariant and report all violations.

    Cardinality and content rules only apply once generation has completed;
    a freshly seeded project with no components is valid.
    """
    v: list[Violation] = []

    def bad(rule: str, message: str, component: str) -> None:
        v.append(Violation(rule=rule, message=message, component=component))

    if not project.seed.text.strip():
        bad("seed.empty", "seed text is empty", "seed")

    # Name uniqueness is case-insensitive: linking is by name mention, which
    # would be ambiguous under case-only collisions.
    seen_names: dict[str, str] = {}
    seen_ids: set[str] = set()
    for entity in project.entities():
        kind = entity.id.kind.value
        comp = f"{kind}/{entity.id.value}"
        if not entity.name.strip():
            bad("entity.name.empty", f"{kind} has an empty name", comp)
        folded = entity.name.strip().lower()
        if folded in seen_names:
            bad(
                "entity.name.duplicate",
                f"name {entity.name!r} collides with {seen_names[folded]}",
                comp,
            )
        else:
            seen_names[folded] = comp
        if entity.id.value in seen_ids:
            bad("entity.id.duplicate", f"duplicate entity id {entity.id.value!r}", comp)
        seen_ids.add(entity.id.value)

    if project.status != "complete":
        return ValidationReport(ok=not v, violations=v)

    if not MIN_ENTITIES <= len(project.personas) <= MAX_ENTITIES:
        bad(
            "personas.count",
            f"persona count {len(project.personas)} out of range "
            f"[{MIN_ENTITIES}, {MAX_ENTITIES}]",
            "personas",
        )
    if not MIN_ENTITIES <= len(project.locations) <= MAX_ENTITIES:
        bad(
            "locations.count",
            f"location count {len(project.locations)} out of range "
            f"[{MIN_ENTITIES}, {MAX_ENTITIES}]",
            "locations",
        )
    if len(project.scenes) != SCENE_COUNT:
        bad(
            "scenes.count",
            f"expected {SCENE_COUNT} scenes, found {len(project.scenes)}",
            "scenes",
        )
    indices = [s.index for s in project.scenes]
    if sorted(indices) != list(range(1, len(project.scenes) + 1)):
        bad(
            "scene.index",
            f"scene indices {indices} are not contiguous starting at 1",
            "scenes",
        )

    for persona in project.personas:
        comp = f"persona/{persona.id.value}"
        for attr in ("age", "clothing", "skin", "hair"):
            if not getattr(persona, attr).strip():
                bad("persona.attribute.empty", f"persona attribute {attr!r} is empty", comp)
    for location in project.locations:
        if not location.description.strip():
            bad(
                "location.description.empty",
                "location description is empty",
                f"location/{location.id.value}",
            )

    if project.storyline is None or not project.storyline.text.strip():
        bad("storyline.empty", "storyline text is missing or empty", "storyline")
    else:
        for entity in project.entities():
            if not _mentions_name(project.storyline.text, entity.name):
                bad(
                    "storyline.entity-missing",
                    f"storyline never mentions {entity.name!r}",
                    "storyline",
                )

    known = {e.id for e in project.entities()}
    for scene in project.scenes:
        comp = f"scene/{scene.index}"
        for linked in scene.linked_entities:
            if linked not in known:
                bad(
                    "scene.entity.dangling",
                    f"scene {scene.index} references missing entity {linked}",
                    comp,
                )
        if not scene.image_prompt.strip():
            bad("scene.image-prompt.empty", "scene image prompt is empty", comp)
        if not scene.narration.strip():
            bad("scene.narration.empty", "scene narration is empty", comp)

    return ValidationReport(ok=not v, violations=v)
