"""Five-step initial generation: seed -> storyline -> tones -> personas ->
locations -> scenes, then one image per scene from its assembled meta-prompt.

Each step's prompt may reference only outputs of earlier steps. The project
id defaults to a digest of (provider fingerprint, seed), so deterministic
providers produce byte-identical projects run-to-run.
"""

from __future__ import annotations

import hashlib

from . import linking, prompts
from .models import (
    EntityKind,
    Location,
    Persona,
    Scene,
    SeedIdea,
    Storyline,
    StoryProject,
    Tone,
    new_entity_id,
    new_project,
    validate_project,
)
from .providers import Provider, ProviderError, ProviderRequest, generate

DEFAULT_STYLE = "cinematic, vibrant colors, wide shot"
DEFAULT_BUDGET = 3


class PipelineError(Exception):
    def __init__(self, step: str, cause: Exception):
        super().__init__(f"generation failed at step {step!r}: {cause}")
        self.step = step
        self.cause = cause


def _run_step(step: str, prompt: str, schema_id: str, provider: Provider, budget: int):
    request = ProviderRequest(prompt=prompt, schema_id=schema_id, budget=budget)
    try:
        return generate(request, provider).parsed
    except ProviderError as exc:
        raise PipelineError(step, exc) from exc


def suggest_ideas(provider: Provider, budget: int = DEFAULT_BUDGET) -> list[str]:
    """Four example seed ideas for the brainstorming screen."""
    parsed = _run_step("ideas", prompts.fill("ideas.txt"), "ideas", provider, budget)
    return parsed["ideas"]


def default_project_id(seed: SeedIdea, provider: Provider) -> str:
    h = hashlib.sha256(
        f"{provider.fingerprint}\x00{seed.origin}\x00{seed.text}".encode()
    )
    return f"story-{h.hexdigest()[:12]}"


def refresh_scene_links(project: StoryProject) -> None:
    """Re-embed linked-entity metadata from the current texts."""
    graph = linking.build_graph(project)
    for scene in project.scenes:
        linked = []
        for name in ("image_prompt", "narration"):
            field_id = linking.scene_field(scene.index, name)
            for ref in sorted(
                (r for r in graph.refs if r.field == field_id), key=lambda r: r.start
            ):
                if ref.entity not in linked:
                    linked.append(ref.entity)
        scene.linked_entities = linked


def generate_scene_image(
    project: StoryProject,
    index: int,
    provider: Provider,
    budget: int = DEFAULT_BUDGET,
    replace_narration: bool = False,
) -> str:
    """Render scene ``index``'s meta-prompt and attach the resulting image.

    Returns the rendered prompt. The joint schema also yields a narration,
    applied only when ``replace_narration`` is set (per-scene regeneration);
    initial generation keeps the narrations from the scenes step.
    """
    graph = linking.build_graph(project)
    scene = project.scene(index)
    meta = prompts.assemble_scene_prompt(scene, project, graph)
    rendered = prompts.render(meta)
    request = ProviderRequest(
        prompt=rendered, schema_id="scene_render", modality="text+image", budget=budget
    )
    response = generate(request, provider)
    scene.image = response.image
    if replace_narration and response.parsed.get("narration"):
        scene.narration = response.parsed["narration"]
    scene.stale = False
    return rendered


def create_project(
    seed: SeedIdea,
    provider: Provider,
    project_id: str | None = None,
    style: str = DEFAULT_STYLE,
    budget: int = DEFAULT_BUDGET,
) -> StoryProject:
    """Run the full chain-of-thought pipeline and return a complete project."""
    project = new_project(seed, project_id or default_project_id(seed, provider))
    project.style = style
    plan = prompts.plan_initial_generation(seed)
    steps = {s.name: s for s in plan.steps}

    story = _run_step(
        "storyline", steps["storyline"].prompt, "storyline", provider, budget
    )
    text = story["text"]

    tones = _run_step(
        "tones",
        prompts.fill(steps["tones"].template, storyline=text),
        "tones",
        provider,
        budget,
    )["tones"]

    personas = _run_step(
        "personas",
        prompts.fill(
            steps["personas"].template,
            storyline=text,
            characters=", ".join(story["characters"]),
        ),
        "personas",
        provider,
        budget,
    )["personas"]

    locations = _run_step(
        "locations",
        prompts.fill(
            steps["locations"].template,
            storyline=text,
            locations=", ".join(story["locations"]),
        ),
        "locations",
        provider,
        budget,
    )["locations"]

    taken: set[str] = set()
    project.personas = [
        Persona(id=new_entity_id(EntityKind.persona, p["name"], taken), **p)
        for p in personas
    ]
    project.locations = [
        Location(id=new_entity_id(EntityKind.location, l["name"], taken), **l)
        for l in locations
    ]
    project.storyline = Storyline(text=text, tones=[Tone(label=t) for t in tones])

    scenes = _run_step(
        "scenes",
        prompts.fill(
            steps["scenes"].template,
            storyline=text,
            tones=", ".join(tones),
            style=style,
            entity_blocks=prompts.entity_blocks_text(project.entities()),
        ),
        "scenes",
        provider,
        budget,
    )["scenes"]
    project.scenes = [
        Scene(
            index=i + 1,
            image_prompt=s["image_prompt"],
            narration=s["narration"],
            tones=[Tone(label=t) for t in s.get("tones", [])],
        )
        for i, s in enumerate(scenes)
    ]
    project.status = "complete"
    refresh_scene_links(project)

    report = validate_project(project)
    if not report.ok:
        raise PipelineError(
            "validate",
            ValueError("; ".join(v.message for v in report.violations)),
        )

    for scene in project.scenes:
        try:
            generate_scene_image(project, scene.index, provider, budget)
        except ProviderError as exc:
            raise PipelineError("images", exc) from exc
    return project
