"""Entity mention extraction and the dependency graph it induces.

Mentions are located by display name: case-insensitive, whole-word, with the
longest entity name winning where names overlap ("Woodsman" never yields a
"Woods" ref). The graph maps each entity to the scenes whose image prompt or
narration mentions it, which is exactly the set of scenes a change to that
entity must touch.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .models import EntityId, Location, Persona, StoryProject

STORYLINE_FIELD = "storyline.text"


def scene_field(index: int, name: str) -> str:
    return f"scene[{index}].{name}"


@dataclass(frozen=True)
class EntityRef:
    """One occurrence of an entity name inside a component text field."""

    entity: EntityId
    field: str
    start: int
    end: int


@dataclass
class LinkGraph:
    refs: list[EntityRef] = field(default_factory=list)
    # Every project entity is a key, including entities mentioned nowhere.
    by_entity: dict[EntityId, set[int]] = field(default_factory=dict)
    storyline_entities: set[EntityId] = field(default_factory=set)


class UnknownEntityError(KeyError):
    def __init__(self, entity: EntityId):
        super().__init__(f"entity not in link graph: {entity}")
        self.entity = entity


def _mention_pattern(names: list[str]) -> re.Pattern | None:
    if not names:
        return None
    # Longest alternative first, so the regex engine prefers the longest
    # entity name at any position. \w lookarounds give whole-word semantics
    # that also work for names containing spaces.
    ordered = sorted(names, key=len, reverse=True)
    body = "|".join(re.escape(n) for n in ordered)
    return re.compile(r"(?<!\w)(?:" + body + r")(?!\w)", re.IGNORECASE)


def extract_refs(
    text: str, field_id: str, entities: list[Persona | Location]
) -> list[EntityRef]:
    """All non-overlapping entity-name mentions in ``text``, by span start."""
    by_name = {e.name.lower(): e.id for e in entities}
    pattern = _mention_pattern([e.name for e in entities])
    if pattern is None or not text:
        return []
    refs = []
    for m in pattern.finditer(text):
        refs.append(
            EntityRef(
                entity=by_name[m.group(0).lower()],
                field=field_id,
                start=m.start(),
                end=m.end(),
            )
        )
    return refs


def build_graph(project: StoryProject) -> LinkGraph:
    """Scan the storyline and every scene's prompt and narration."""
    entities = project.entities()
    graph = LinkGraph(by_entity={e.id: set() for e in entities})

    if project.storyline is not None:
        for ref in extract_refs(project.storyline.text, STORYLINE_FIELD, entities):
            graph.refs.append(ref)
            graph.storyline_entities.add(ref.entity)

    for scene in project.scenes:
        for name in ("image_prompt", "narration"):
            text = getattr(scene, name)
            for ref in extract_refs(text, scene_field(scene.index, name), entities):
                graph.refs.append(ref)
                graph.by_entity[ref.entity].add(scene.index)
    return graph


def dirty_set(graph: LinkGraph, changed: set[EntityId]) -> set[int]:
    """Scene indices whose texts mention any changed entity."""
    out: set[int] = set()
    for entity in changed:
        if entity not in graph.by_entity:
            raise UnknownEntityError(entity)
        out |= graph.by_entity[entity]
    return out


def storyline_affected(graph: LinkGraph, changed: set[EntityId]) -> bool:
    for entity in changed:
        if entity not in graph.by_entity:
            raise UnknownEntityError(entity)
    return bool(changed & graph.storyline_entities)


def rewrite_name(text: str, old: str, new: str) -> str:
    """Deterministically rename whole-word, case-insensitive mentions."""
    pattern = re.compile(r"(?<!\w)" + re.escape(old) + r"(?!\w)", re.IGNORECASE)
    return pattern.sub(lambda _: new, text)
