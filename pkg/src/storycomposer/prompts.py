"""Deterministic prompt assembly.

Two kinds of prompts are built here: the five-step initial-generation plan
(storyline -> tones -> personas -> locations -> scenes) and the per-scene
meta-prompt that embeds the current description of every entity the scene
references. Template text lives in ``templates/*.txt`` as plain files with
``$name`` placeholders, so prompt wording can be iterated without touching
code. User text is only ever inserted as a substitution value, never
re-scanned, so delimiter characters in a seed cannot break assembly.
"""

from __future__ import annotations

import functools
from importlib import resources
from string import Template
from typing import Literal, Optional

from pydantic import BaseModel, Field

from .linking import LinkGraph, scene_field
from .models import Location, Persona, Scene, SeedIdea, StoryProject

TEMPLATE_VERSION = "1"

TASK_HEADER = (
    "Generate the scene image and write a short narration for the scene below, "
    "keeping every persona and location consistent with its description."
)

StepName = Literal["storyline", "tones", "personas", "locations", "scenes"]

# (step, template file, structured-output schema id), in execution order.
PIPELINE_STEPS: list[tuple[StepName, str, str]] = [
    ("storyline", "step1_storyline.txt", "storyline"),
    ("tones", "step2_tones.txt", "tones"),
    ("personas", "step3_personas.txt", "personas"),
    ("locations", "step4_locations.txt", "locations"),
    ("scenes", "step5_scenes.txt", "scenes"),
]

REVISION_TEMPLATES = {
    "persona": ("revise_persona.txt", "revise_persona"),
    "location": ("revise_location.txt", "revise_location"),
    "storyline": ("revise_storyline.txt", "revise_storyline"),
    "scene": ("revise_scene_field.txt", "revise_scene_field"),
}


@functools.lru_cache(maxsize=None)
def template_text(name: str) -> str:
    return resources.files(__package__).joinpath("templates", name).read_text()


def fill(template_name: str, **values: str) -> str:
    return Template(template_text(template_name)).substitute(values)


class StepSpec(BaseModel):
    name: StepName
    schema_id: str
    template: str
    # Only step 1 can be rendered up front; later steps need earlier outputs.
    prompt: Optional[str] = None


class GenerationPlan(BaseModel):
    steps: list[StepSpec]


def plan_initial_generation(seed: SeedIdea) -> GenerationPlan:
    steps = []
    for name, template, schema_id in PIPELINE_STEPS:
        prompt = fill(template, seed=seed.text) if name == "storyline" else None
        steps.append(
            StepSpec(name=name, schema_id=schema_id, template=template, prompt=prompt)
        )
    return GenerationPlan(steps=steps)


class EntityBlock(BaseModel):
    name: str
    description: str


class MetaPrompt(BaseModel):
    """Structured scene prompt before flattening for the provider."""

    task_header: str = TASK_HEADER
    style: str = ""
    entity_blocks: list[EntityBlock] = Field(default_factory=list)
    scene_body: str = ""
    tones: list[str] = Field(default_factory=list)
    output_schema_id: str = "scene_render"


def serialize_entity(entity: Persona | Location) -> str:
    """Canonical block form embedded verbatim into generation prompts."""
    if isinstance(entity, Persona):
        return (
            f"== Persona: {entity.name} ==\n"
            f"age: {entity.age}\n"
            f"clothing: {entity.clothing}\n"
            f"skin: {entity.skin}\n"
            f"hair: {entity.hair}\n"
            f"extra: {entity.extra}"
        )
    return f"== Location: {entity.name} ==\ndescription: {entity.description}"


class EntityDesyncError(LookupError):
    """A scene references an entity the project no longer contains."""


def assemble_scene_prompt(
    scene: Scene, project: StoryProject, graph: LinkGraph
) -> MetaPrompt:
    """Embed each referenced entity's current description, first-mention order."""
    field_id = scene_field(scene.index, "image_prompt")
    refs = sorted(
        (r for r in graph.refs if r.field == field_id), key=lambda r: r.start
    )
    blocks: list[EntityBlock] = []
    seen = set()
    for ref in refs:
        if ref.entity in seen:
            continue
        seen.add(ref.entity)
        entity = project.find_entity(ref.entity)
        if entity is None:
            raise EntityDesyncError(f"scene {scene.index} references {ref.entity}")
        blocks.append(EntityBlock(name=entity.name, description=serialize_entity(entity)))
    return MetaPrompt(
        style=project.style,
        entity_blocks=blocks,
        scene_body=scene.image_prompt,
        tones=[t.label for t in scene.tones],
    )


def render(meta: MetaPrompt) -> str:
    """Flatten a MetaPrompt to the canonical provider text."""
    return fill(
        "scene_prompt.txt",
        task_header=meta.task_header,
        style=meta.style,
        entity_blocks="\n\n".join(b.description for b in meta.entity_blocks),
        scene_body=meta.scene_body,
        tones=", ".join(meta.tones),
        schema=meta.output_schema_id,
    )


def entity_blocks_text(entities: list[Persona | Location]) -> str:
    return "\n\n".join(serialize_entity(e) for e in entities)
