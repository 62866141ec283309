import json
import random

import pytest

from conftest import make_mock_project, make_race_project, scan_mentioning_scenes
from storycomposer import linking
from storycomposer.models import ComponentRef
from storycomposer.prompts import assemble_scene_prompt, render
from storycomposer.providers import FlakyProvider, MockProvider
from storycomposer.revision import (
    ComponentNotFoundError,
    EmptyInstructionError,
    NameCollisionError,
    NothingToUndoError,
    RevisionEngine,
    RevisionFailedError,
    SceneIndexOutOfRange,
)
from storycomposer.storage import serialize_project


@pytest.fixture
def engine(mock_provider):
    return RevisionEngine(mock_provider, clock=lambda: "2026-01-01T00:00:00+00:00")


def rendered_prompts(project) -> dict[int, str]:
    graph = linking.build_graph(project)
    return {
        s.index: render(assemble_scene_prompt(s, project, graph))
        for s in project.scenes
    }


def strip_revisions(project) -> str:
    data = project.model_dump(mode="json")
    data.pop("revisions")
    return json.dumps(data, sort_keys=True)


def ref_for(project, name) -> ComponentRef:
    entity = next(e for e in project.entities() if e.name == name)
    return ComponentRef(kind=entity.id.kind.value, entity_id=entity.id.value)


class TestReviseEntity:
    def test_selective_propagation_marble_puzzle_pattern(self, race_project, engine):
        # Winding Trail is mentioned only in scenes 5 and 6.
        before = rendered_prompts(race_project)
        updated, rev = engine.revise(
            race_project,
            ref_for(race_project, "Winding Trail"),
            'set description to "A chalk-marked track lined with lanterns."',
        )
        after = rendered_prompts(updated)
        changed = {i for i in before if before[i] != after[i]}
        assert changed == {5, 6}
        assert rev.propagation.dirty_scenes == [5, 6]
        assert rev.propagation.images_invalidated == [5, 6]
        assert sorted(rev.propagation.reassembled_prompts) == [5, 6]
        assert {i for i, s in enumerate(updated.scenes, 1) if s.stale} == {5, 6}
        # Untouched scenes byte-identical.
        for i in (1, 2, 3, 4):
            assert updated.scenes[i - 1] == race_project.scenes[i - 1]

    def test_unreferenced_entity_edit_has_empty_dirty_set(self, race_project, engine):
        updated, rev = engine.revise(
            race_project,
            ref_for(race_project, "Glass Grotto"),
            'set description to "A cave of singing glass."',
        )
        assert rev.propagation.dirty_scenes == []
        assert rev.propagation.images_invalidated == []
        assert updated.scenes == race_project.scenes

    def test_rename_rewrites_all_dependent_texts(self, race_project, engine):
        updated, rev = engine.revise(
            race_project, ref_for(race_project, "Blaze"), 'rename to "Dash"'
        )
        assert rev.propagation.dirty_scenes == [1, 3, 5, 6]
        assert "Blaze" not in updated.storyline.text
        assert "Dash" in updated.storyline.text
        for scene in updated.scenes:
            assert "Blaze" not in scene.image_prompt
            assert "Blaze" not in scene.narration
        for i in (1, 3, 5, 6):
            assert "Dash" in updated.scene(i).image_prompt
        # Scenes that never mentioned Blaze keep their exact text.
        for i in (2, 4):
            assert updated.scene(i).image_prompt == race_project.scene(i).image_prompt

    def test_rename_collision_rejected_atomically(self, race_project, engine):
        before = serialize_project(race_project)
        with pytest.raises(NameCollisionError):
            engine.revise(
                race_project, ref_for(race_project, "Blaze"), 'rename to "sheldon"'
            )
        assert serialize_project(race_project) == before

    def test_random_edits_match_brute_force_oracle(self):
        rng = random.Random(99)
        for trial in range(20):
            project = make_mock_project(1000 + trial)
            engine = RevisionEngine(MockProvider(1000 + trial))
            entity = rng.choice(project.entities())
            field = "clothing" if entity.id.kind.value == "persona" else "description"
            updated, rev = engine.revise(
                project,
                ComponentRef(kind=entity.id.kind.value, entity_id=entity.id.value),
                f'set {field} to "oracle check {trial}"',
            )
            assert set(rev.propagation.dirty_scenes) == scan_mentioning_scenes(
                project, entity.name
            )

    def test_missing_component(self, race_project, engine):
        with pytest.raises(ComponentNotFoundError):
            engine.revise(
                race_project,
                ComponentRef(kind="persona", entity_id="nobody"),
                "do something",
            )

    def test_empty_instruction(self, race_project, engine):
        with pytest.raises(EmptyInstructionError):
            engine.revise(race_project, ref_for(race_project, "Blaze"), "   ")


class TestPropagate:
    def test_empty_changed_set_is_noop(self, race_project, engine):
        updated, prop = engine.propagate(race_project, set())
        assert strip_revisions(updated) == strip_revisions(race_project)
        assert prop.dirty_scenes == []
        assert prop.reassembled_prompts == {}

    def test_union_of_individual_dirty_sets(self, race_project, engine):
        blaze = ref_for(race_project, "Blaze")
        woods = ref_for(race_project, "Whispering Woods")
        ids = {
            next(e.id for e in race_project.entities() if e.id.value == r.entity_id)
            for r in (blaze, woods)
        }
        _, both = engine.propagate(race_project, ids)
        singles = set()
        for eid in ids:
            _, prop = engine.propagate(race_project, {eid})
            singles |= set(prop.dirty_scenes)
        assert set(both.dirty_scenes) == singles == {1, 2, 3, 4, 5, 6} - {2, 4} | {2, 4}

    def test_confluence_of_disjoint_edits(self, race_project):
        # Blaze (scenes 1,3,5,6 minus overlap) vs nothing disjoint there; use
        # Whispering Woods {1,2,3,4} and Winding Trail {5,6}.
        engine = RevisionEngine(MockProvider(42))
        woods = ref_for(race_project, "Whispering Woods")
        trail = ref_for(race_project, "Winding Trail")
        instr_w = 'set description to "Woods rewritten."'
        instr_t = 'set description to "Trail rewritten."'
        a1, _ = engine.revise(race_project, woods, instr_w)
        a2, _ = engine.revise(a1, trail, instr_t)
        b1, _ = engine.revise(race_project, trail, instr_t)
        b2, _ = engine.revise(b1, woods, instr_w)
        assert rendered_prompts(a2) == rendered_prompts(b2)
        assert strip_revisions(a2) == strip_revisions(b2)


class TestStorylineEdit:
    def test_no_automatic_scene_changes(self, race_project, engine):
        updated, rev = engine.revise(
            race_project,
            ComponentRef(kind="storyline"),
            'replace "slow and steady" with "patience"',
        )
        assert rev.propagation.storyline_touched
        assert rev.propagation.dirty_scenes == []
        assert updated.scenes == race_project.scenes
        assert updated.storyline_out_of_sync
        assert "patience takes the day" in updated.storyline.text


class TestSceneFieldEdit:
    def test_image_prompt_edit_marks_only_that_scene(self, race_project, engine):
        target = ComponentRef(kind="scene", scene_index=3, field="image_prompt")
        updated, rev = engine.revise(
            race_project, target, 'set text to "Blaze snores under a pine."'
        )
        assert updated.scene(3).image_prompt == "Blaze snores under a pine."
        assert rev.propagation.dirty_scenes == [3]
        assert rev.propagation.images_invalidated == [3]
        assert [s.index for s in updated.scenes if s.stale] == [3]

    def test_narration_edit_does_not_invalidate_image(self, race_project, engine):
        target = ComponentRef(kind="scene", scene_index=2, field="narration")
        updated, rev = engine.revise(
            race_project, target, 'set text to "Sheldon hums through Whispering Woods."'
        )
        assert rev.propagation.images_invalidated == []
        assert not updated.scene(2).stale


class TestRegenerateScene:
    def test_regenerates_stale_scene(self, race_project, engine):
        dirty, _ = engine.revise(
            race_project, ref_for(race_project, "Blaze"), 'set hair to "slick silver"'
        )
        updated, rev = engine.regenerate_scene(dirty, 1)
        scene = updated.scene(1)
        assert not scene.stale
        graph = linking.build_graph(updated)
        current = render(assemble_scene_prompt(scene, updated, graph))
        from storycomposer.providers import prompt_digest

        assert scene.image.handle == prompt_digest(current)

    def test_non_stale_scene_allowed_and_recorded(self, race_project, engine):
        updated, rev = engine.regenerate_scene(race_project, 2)
        assert rev.kind == "regenerate"
        assert updated.revisions[-1].id == 1

    def test_out_of_bounds(self, race_project, engine):
        with pytest.raises(SceneIndexOutOfRange):
            engine.regenerate_scene(race_project, 7)

    def test_regenerate_all_stale_touches_exactly_dirty(self, race_project, engine):
        dirty, rev = engine.revise(
            race_project,
            ref_for(race_project, "Winding Trail"),
            'set description to "Lantern-lit switchbacks."',
        )
        updated, indices = engine.regenerate_all_stale(dirty)
        assert indices == [5, 6]
        assert not any(s.stale for s in updated.scenes)
        for i in (1, 2, 3, 4):
            assert updated.scene(i).image == race_project.scene(i).image

    def test_regenerate_all_with_nothing_stale(self, race_project, engine):
        updated, indices = engine.regenerate_all_stale(race_project)
        assert indices == []
        assert updated is race_project


class TestAtomicity:
    def test_failed_revise_leaves_project_byte_identical(self, race_project):
        engine = RevisionEngine(
            FlakyProvider(MockProvider(42), failures=10), budget=2
        )
        before = serialize_project(race_project)
        with pytest.raises(RevisionFailedError):
            engine.revise(
                race_project, ref_for(race_project, "Blaze"), 'set age to "ancient"'
            )
        assert serialize_project(race_project) == before

    def test_failed_regenerate_preserves_stale_flag(self, race_project):
        race_project.scenes[0].stale = True
        engine = RevisionEngine(
            FlakyProvider(MockProvider(42), failures=10, mode="transport"), budget=2
        )
        before = serialize_project(race_project)
        with pytest.raises(RevisionFailedError):
            engine.regenerate_scene(race_project, 1)
        assert serialize_project(race_project) == before


class TestUndo:
    def test_revise_then_undo_restores_everything_but_history(
        self, race_project, engine
    ):
        edited, _ = engine.revise(
            race_project, ref_for(race_project, "Blaze"), 'set clothing to "a tux"'
        )
        undone, marker = engine.undo(edited)
        assert strip_revisions(undone) == strip_revisions(race_project)
        assert marker.kind == "undo"
        assert marker.undone_revision == 1
        assert len(undone.revisions) == 2

    def test_undo_is_lifo(self, race_project, engine):
        p1, _ = engine.revise(
            race_project, ref_for(race_project, "Blaze"), 'set age to "old"'
        )
        p2, _ = engine.revise(
            p1, ref_for(race_project, "Sheldon"), 'set age to "young"'
        )
        p3, marker = engine.undo(p2)
        assert marker.undone_revision == 2
        assert strip_revisions(p3) == strip_revisions(p1)
        p4, marker2 = engine.undo(p3)
        assert marker2.undone_revision == 1
        assert strip_revisions(p4) == strip_revisions(race_project)
        with pytest.raises(NothingToUndoError):
            engine.undo(p4)

    def test_undo_after_rename_restores_prompts_byte_exact(self, race_project, engine):
        before = rendered_prompts(race_project)
        renamed, _ = engine.revise(
            race_project, ref_for(race_project, "Blaze"), 'rename to "Dash"'
        )
        undone, _ = engine.undo(renamed)
        assert rendered_prompts(undone) == before
        assert strip_revisions(undone) == strip_revisions(race_project)

    def test_undo_empty_history_errors(self, race_project, engine):
        with pytest.raises(NothingToUndoError):
            engine.undo(race_project)

    def test_undo_regeneration_restores_prior_image(self, race_project, engine):
        regen, _ = engine.regenerate_scene(race_project, 4)
        assert regen.scene(4).image != race_project.scene(4).image
        undone, _ = engine.undo(regen)
        assert strip_revisions(undone) == strip_revisions(race_project)


class TestHistoryIntegrity:
    def test_revision_ids_strictly_increase(self, race_project, engine):
        p = race_project
        for name in ("Blaze", "Sheldon", "Whispering Woods"):
            p, _ = engine.revise(p, ref_for(race_project, name), 'set extra to "x"'
                                 if name in ("Blaze", "Sheldon")
                                 else 'set description to "x"')
        p, _ = engine.undo(p)
        assert [r.id for r in p.revisions] == [1, 2, 3, 4]

    def test_replaying_after_snapshots_reproduces_state(self, race_project, engine):
        p = race_project
        p, _ = engine.revise(p, ref_for(race_project, "Blaze"), 'rename to "Dash"')
        p, _ = engine.revise(
            p,
            ref_for(race_project, "Whispering Woods"),
            'set description to "A brighter forest."',
        )
        replayed = make_race_project()
        for rev in p.revisions:
            if rev.target.kind == "persona":
                persona = next(
                    x for x in replayed.personas if x.id.value == rev.target.entity_id
                )
                old_name, new_name = persona.name, rev.after["name"]
                replayed.personas = [
                    type(persona)(**rev.after) if x.id == persona.id else x
                    for x in replayed.personas
                ]
                changed = {persona.id}
            else:
                location = next(
                    x for x in replayed.locations if x.id.value == rev.target.entity_id
                )
                old_name, new_name = location.name, rev.after["name"]
                replayed.locations = [
                    type(location)(**rev.after) if x.id == location.id else x
                    for x in replayed.locations
                ]
                changed = {location.id}
            renames = {}
            if old_name != new_name:
                renames = {next(iter(changed)): (old_name, new_name)}
            # Deterministic replay: the recorded after-snapshot plus the
            # engine's own propagation rules.
            replayed_engine = RevisionEngine(MockProvider(42))
            # Names were already swapped in via the snapshot; rewrite texts.
            for old, new in renames.values():
                replayed.storyline = replayed.storyline.model_copy(
                    update={
                        "text": linking.rewrite_name(replayed.storyline.text, old, new)
                    }
                )
                for scene in replayed.scenes:
                    scene.image_prompt = linking.rewrite_name(
                        scene.image_prompt, old, new
                    )
                    scene.narration = linking.rewrite_name(scene.narration, old, new)
            for index in rev.propagation.dirty_scenes:
                replayed.scene(index).stale = True
            from storycomposer.pipeline import refresh_scene_links

            refresh_scene_links(replayed)
        assert strip_revisions(replayed) == strip_revisions(p)
