"""Applies one chat instruction to one component and propagates the change.

A revision is component-scoped: the provider sees only the target component,
the story tones, and the instruction. If the target is a persona or location,
every scene whose prompt or narration mentions it is marked dirty, its
meta-prompt reassembled, and its image invalidated; nothing else is touched.
Renames are rewritten into dependent texts as a deterministic string edit,
never by re-asking the model. Storyline edits cascade to nothing: scenes are
only flagged as possibly out of sync and regenerate on explicit request.

Every operation works on a deep copy and commits by returning the new state,
so any failure leaves the caller's project byte-identical.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Callable, Optional

from . import linking, prompts
from .linking import LinkGraph
from .models import (
    ComponentRef,
    EntityId,
    Location,
    Persona,
    PropagationResult,
    Revision,
    Scene,
    Storyline,
    StoryProject,
    Tone,
)
from .pipeline import DEFAULT_BUDGET, generate_scene_image, refresh_scene_links
from .providers import Provider, ProviderError, ProviderRequest, generate


class RevisionError(Exception):
    code = "revision_error"


class ComponentNotFoundError(RevisionError):
    code = "component_not_found"


class EmptyInstructionError(RevisionError):
    code = "empty_instruction"


class NameCollisionError(RevisionError):
    code = "name_collision"


class SceneIndexOutOfRange(RevisionError):
    code = "scene_index_out_of_range"


class NothingToUndoError(RevisionError):
    code = "nothing_to_undo"


class RevisionFailedError(RevisionError):
    """Provider never produced valid output; no state was changed."""

    code = "generation_failed"

    def __init__(self, cause: ProviderError):
        super().__init__(str(cause))
        self.cause = cause


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def component_snapshot(project: StoryProject, target: ComponentRef) -> dict:
    if target.kind == "storyline":
        return project.storyline.model_dump(mode="json") if project.storyline else {}
    if target.kind in ("persona", "location"):
        entity = project.find_entity(target.entity_id)
        if entity is None:
            raise ComponentNotFoundError(f"no such entity: {target.entity_id}")
        return entity.model_dump(mode="json")
    scene = project.scene(target.scene_index)
    if scene is None:
        raise ComponentNotFoundError(f"no scene {target.scene_index}")
    return scene.model_dump(mode="json")


class RevisionEngine:
    def __init__(
        self,
        provider: Provider,
        budget: int = DEFAULT_BUDGET,
        clock: Optional[Callable[[], str]] = None,
    ):
        self.provider = provider
        self.budget = budget
        self.clock = clock or _now

    # -- public operations ---------------------------------------------------

    def revise(
        self, project: StoryProject, target: ComponentRef, instruction: str
    ) -> tuple[StoryProject, Revision]:
        if not instruction.strip():
            raise EmptyInstructionError("instruction must not be empty")
        working = project.model_copy(deep=True)
        before = component_snapshot(working, target)

        if target.kind in ("persona", "location"):
            prop, after = self._revise_entity(working, target, instruction)
        elif target.kind == "storyline":
            prop, after = self._revise_storyline(working, instruction)
        else:
            prop, after = self._revise_scene_field(working, target, instruction)

        revision = Revision(
            id=len(working.revisions) + 1,
            target=target,
            instruction=instruction,
            before=before,
            after=after,
            propagation=prop,
            timestamp=self.clock(),
        )
        working.revisions.append(revision)
        return working, revision

    def propagate(
        self,
        project: StoryProject,
        changed: set[EntityId],
        renames: Optional[dict[EntityId, tuple[str, str]]] = None,
    ) -> tuple[StoryProject, PropagationResult]:
        """Reassemble exactly the scenes that depend on ``changed`` entities."""
        working = project.model_copy(deep=True)
        graph = linking.build_graph(working)
        prop = self._apply_propagation(working, changed, graph, renames or {})
        return working, prop

    def regenerate_scene(
        self, project: StoryProject, index: int
    ) -> tuple[StoryProject, Revision]:
        if project.scene(index) is None:
            raise SceneIndexOutOfRange(f"no scene {index}")
        working = project.model_copy(deep=True)
        target = ComponentRef(kind="scene", scene_index=index)
        before = component_snapshot(working, target)
        prior_stale = working.scene(index).stale
        try:
            rendered = generate_scene_image(
                working, index, self.provider, self.budget, replace_narration=True
            )
        except ProviderError as exc:
            raise RevisionFailedError(exc) from exc
        refresh_scene_links(working)
        revision = Revision(
            id=len(working.revisions) + 1,
            kind="regenerate",
            target=target,
            instruction="regenerate scene",
            before=before,
            after=component_snapshot(working, target),
            propagation=PropagationResult(
                dirty_scenes=[index],
                reassembled_prompts={index: rendered},
                prior_stale={index: prior_stale},
            ),
            timestamp=self.clock(),
        )
        working.revisions.append(revision)
        return working, revision

    def regenerate_all_stale(
        self, project: StoryProject
    ) -> tuple[StoryProject, list[int]]:
        indices = sorted(s.index for s in project.scenes if s.stale)
        working = project
        for index in indices:
            working, _ = self.regenerate_scene(working, index)
        return working, indices

    def undo(self, project: StoryProject) -> tuple[StoryProject, Revision]:
        if not project.revisions:
            raise NothingToUndoError("revision history is empty")
        working = project.model_copy(deep=True)
        # Undo walks back LIFO through the real edits; markers themselves are
        # never undone, so repeated undo keeps reverting earlier revisions.
        undone = {
            r.undone_revision for r in working.revisions if r.kind == "undo"
        }
        candidates = [
            r
            for r in working.revisions
            if r.kind != "undo" and r.id not in undone
        ]
        if not candidates:
            raise NothingToUndoError("every revision is already undone")
        last = candidates[-1]
        target = last.target
        marker_before = component_snapshot(working, target)
        marker_prior_stale = {
            i: working.scene(i).stale
            for i in last.propagation.dirty_scenes
            if working.scene(i) is not None
        }
        marker_prior_sync = working.storyline_out_of_sync

        self._restore_snapshot(working, target, last.before, was=last.after)
        for index, flag in last.propagation.prior_stale.items():
            scene = working.scene(index)
            if scene is not None:
                scene.stale = flag
        if target.kind == "storyline":
            working.storyline_out_of_sync = last.propagation.prior_out_of_sync
        refresh_scene_links(working)

        marker = Revision(
            id=len(working.revisions) + 1,
            kind="undo",
            target=target,
            instruction=f"undo revision {last.id}",
            before=marker_before,
            after=last.before,
            propagation=PropagationResult(
                dirty_scenes=list(last.propagation.dirty_scenes),
                storyline_touched=last.propagation.storyline_touched,
                prior_stale=marker_prior_stale,
                prior_out_of_sync=marker_prior_sync,
            ),
            timestamp=self.clock(),
            undone_revision=last.id,
        )
        working.revisions.append(marker)
        return working, marker

    # -- internals -----------------------------------------------------------

    def _call(self, prompt: str, schema_id: str) -> dict:
        request = ProviderRequest(prompt=prompt, schema_id=schema_id, budget=self.budget)
        try:
            return generate(request, self.provider).parsed
        except ProviderError as exc:
            raise RevisionFailedError(exc) from exc

    def _tones_text(self, project: StoryProject) -> str:
        if project.storyline is None:
            return ""
        return ", ".join(t.label for t in project.storyline.tones)

    def _revise_entity(
        self, working: StoryProject, target: ComponentRef, instruction: str
    ) -> tuple[PropagationResult, dict]:
        entity = working.find_entity(target.entity_id)
        if entity is None or entity.id.kind.value != target.kind:
            raise ComponentNotFoundError(f"no such {target.kind}: {target.entity_id}")

        is_persona = isinstance(entity, Persona)
        payload = entity.model_dump(mode="json", exclude={"id"})
        template, schema_id = prompts.REVISION_TEMPLATES[target.kind]
        prompt = prompts.fill(
            template,
            component=json.dumps(payload, indent=2, sort_keys=True),
            tones=self._tones_text(working),
            instruction=instruction,
        )
        parsed = self._call(prompt, schema_id)
        data = parsed["persona" if is_persona else "location"]

        new_name = data["name"]
        for other in working.entities():
            if other.id != entity.id and other.name.strip().lower() == new_name.strip().lower():
                raise NameCollisionError(
                    f"name {new_name!r} collides with existing entity {other.id}"
                )

        # Dirty set must be computed while the texts still carry the old name.
        pre_graph = linking.build_graph(working)
        renames: dict[EntityId, tuple[str, str]] = {}
        if new_name != entity.name:
            renames[entity.id] = (entity.name, new_name)

        if is_persona:
            updated = Persona(id=entity.id, **data)
            working.personas = [
                updated if p.id == entity.id else p for p in working.personas
            ]
        else:
            updated = Location(id=entity.id, **data)
            working.locations = [
                updated if l.id == entity.id else l for l in working.locations
            ]

        prop = self._apply_propagation(working, {entity.id}, pre_graph, renames)
        return prop, updated.model_dump(mode="json")

    def _revise_storyline(
        self, working: StoryProject, instruction: str
    ) -> tuple[PropagationResult, dict]:
        if working.storyline is None:
            raise ComponentNotFoundError("storyline has not been generated yet")
        payload = {
            "text": working.storyline.text,
            "tones": [t.label for t in working.storyline.tones],
        }
        template, schema_id = prompts.REVISION_TEMPLATES["storyline"]
        prompt = prompts.fill(
            template,
            component=json.dumps(payload, indent=2, sort_keys=True),
            instruction=instruction,
        )
        data = self._call(prompt, schema_id)["storyline"]
        prop = PropagationResult(
            storyline_touched=True,
            prior_out_of_sync=working.storyline_out_of_sync,
        )
        working.storyline = Storyline(
            text=data["text"],
            tones=[Tone(label=t) for t in data.get("tones", [])]
            or working.storyline.tones,
        )
        # Scenes are not regenerated automatically; they are only flagged so
        # the UI can offer explicit regeneration.
        working.storyline_out_of_sync = True
        return prop, working.storyline.model_dump(mode="json")

    def _revise_scene_field(
        self, working: StoryProject, target: ComponentRef, instruction: str
    ) -> tuple[PropagationResult, dict]:
        scene = working.scene(target.scene_index)
        if scene is None:
            raise ComponentNotFoundError(f"no scene {target.scene_index}")
        field = target.field
        if field is None:
            raise ComponentNotFoundError(
                "scene revisions must name a field (image_prompt or narration)"
            )
        template, schema_id = prompts.REVISION_TEMPLATES["scene"]
        prompt = prompts.fill(
            template,
            field=field,
            component=getattr(scene, field),
            tones=self._tones_text(working),
            instruction=instruction,
        )
        text = self._call(prompt, schema_id)["text"]

        prop = PropagationResult(
            dirty_scenes=[scene.index],
            prior_stale={scene.index: scene.stale},
        )
        setattr(scene, field, text)
        refresh_scene_links(working)
        if field == "image_prompt":
            scene.stale = True
            if scene.image is not None:
                prop.images_invalidated = [scene.index]
            graph = linking.build_graph(working)
            prop.reassembled_prompts[scene.index] = prompts.render(
                prompts.assemble_scene_prompt(scene, working, graph)
            )
        return prop, component_snapshot(working, target)

    def _apply_propagation(
        self,
        working: StoryProject,
        changed: set[EntityId],
        pre_graph: LinkGraph,
        renames: dict[EntityId, tuple[str, str]],
    ) -> PropagationResult:
        dirty = sorted(linking.dirty_set(pre_graph, changed))
        storyline_touched = linking.storyline_affected(pre_graph, changed)
        prop = PropagationResult(
            dirty_scenes=dirty,
            storyline_touched=storyline_touched,
            prior_stale={i: working.scene(i).stale for i in dirty},
        )
        for old, new in renames.values():
            if working.storyline is not None:
                working.storyline = working.storyline.model_copy(
                    update={"text": linking.rewrite_name(working.storyline.text, old, new)}
                )
            for scene in working.scenes:
                scene.image_prompt = linking.rewrite_name(scene.image_prompt, old, new)
                scene.narration = linking.rewrite_name(scene.narration, old, new)

        post_graph = linking.build_graph(working)
        for index in dirty:
            scene = working.scene(index)
            scene.stale = True
            if scene.image is not None:
                prop.images_invalidated.append(index)
            prop.reassembled_prompts[index] = prompts.render(
                prompts.assemble_scene_prompt(scene, working, post_graph)
            )
        refresh_scene_links(working)
        return prop

    def _restore_snapshot(
        self, working: StoryProject, target: ComponentRef, snap: dict, was: dict
    ) -> None:
        if target.kind == "storyline":
            working.storyline = Storyline(**snap) if snap else None
            return
        if target.kind in ("persona", "location"):
            old_name, new_name = snap.get("name"), was.get("name")
            if old_name and new_name and old_name != new_name:
                # Reverse the deterministic rename rewrite.
                if working.storyline is not None:
                    working.storyline = working.storyline.model_copy(
                        update={
                            "text": linking.rewrite_name(
                                working.storyline.text, new_name, old_name
                            )
                        }
                    )
                for scene in working.scenes:
                    scene.image_prompt = linking.rewrite_name(
                        scene.image_prompt, new_name, old_name
                    )
                    scene.narration = linking.rewrite_name(
                        scene.narration, new_name, old_name
                    )
            if target.kind == "persona":
                restored = Persona(**snap)
                working.personas = [
                    restored if p.id.value == target.entity_id else p
                    for p in working.personas
                ]
            else:
                restored = Location(**snap)
                working.locations = [
                    restored if l.id.value == target.entity_id else l
                    for l in working.locations
                ]
            return
        restored_scene = Scene(**snap)
        working.scenes = [
            restored_scene if s.index == target.scene_index else s
            for s in working.scenes
        ]
