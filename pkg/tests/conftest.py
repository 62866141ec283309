import random

import pytest

from storycomposer.models import (
    EntityId,
    EntityKind,
    ImageAsset,
    Location,
    Persona,
    Scene,
    SeedIdea,
    Storyline,
    StoryProject,
    Tone,
)
from storycomposer.pipeline import create_project, refresh_scene_links
from storycomposer.providers import MockProvider


def brute_force_refs(text: str, names: list[str]) -> list[tuple[int, int, str]]:
    """Independent mention oracle: scan every substring occurrence of every
    name, filter to whole-word boundaries, then pick non-overlapping matches
    left to right with the longest name winning at each position."""

    def wordish(c: str) -> bool:
        return c.isalnum() or c == "_"

    low = text.lower()
    candidates = []
    for name in names:
        needle = name.lower()
        start = 0
        while True:
            i = low.find(needle, start)
            if i < 0:
                break
            j = i + len(needle)
            if (i == 0 or not wordish(text[i - 1])) and (
                j == len(text) or not wordish(text[j])
            ):
                candidates.append((i, j, name))
            start = i + 1
    candidates.sort(key=lambda c: (c[0], -(c[1] - c[0])))
    chosen = []
    cursor = 0
    for i, j, name in candidates:
        if i >= cursor:
            chosen.append((i, j, name))
            cursor = j
    return chosen


def scan_mentioning_scenes(project: StoryProject, name: str, fields=("image_prompt", "narration")) -> set[int]:
    """Brute-force dirty-set oracle: scenes whose texts mention ``name``."""
    out = set()
    for scene in project.scenes:
        for field in fields:
            if brute_force_refs(getattr(scene, field), [name]):
                out.add(scene.index)
    return out


def _pid(kind: EntityKind, value: str) -> EntityId:
    return EntityId(value=value, kind=kind)


def make_race_project() -> StoryProject:
    """Handcrafted two-persona race story with controlled mention placement.

    Blaze appears in scenes 1, 3, 5, 6; Sheldon in 2, 4, 5, 6; Whispering
    Woods in 1-4; Winding Trail only in 5 and 6; Glass Grotto nowhere.
    """
    blaze = Persona(
        id=_pid(EntityKind.persona, "blaze"),
        name="Blaze",
        age="young adult",
        clothing="a red racing scarf",
        skin="tawny fur",
        hair="slicked-back white tufts",
        extra="A bunny who never walks when he can sprint.",
    )
    sheldon = Persona(
        id=_pid(EntityKind.persona, "sheldon"),
        name="Sheldon",
        age="elderly",
        clothing="a moss-green shell cover",
        skin="olive scales",
        hair="none to speak of",
        extra="A turtle who plans every step.",
    )
    woods = Location(
        id=_pid(EntityKind.location, "whispering-woods"),
        name="Whispering Woods",
        description="A dense forest of silver birches where every sound carries.",
    )
    trail = Location(
        id=_pid(EntityKind.location, "winding-trail"),
        name="Winding Trail",
        description="A switchback dirt path ending at a ribbon of finish-line flags.",
    )
    grotto = Location(
        id=_pid(EntityKind.location, "glass-grotto"),
        name="Glass Grotto",
        description="A cave of translucent stone nobody visits in this story.",
    )
    texts = {
        1: ("Blaze limbers up at the start post deep in Whispering Woods.",
            "Inside Whispering Woods, Blaze bounces on the start line."),
        2: ("Sheldon plods past mossy roots under Whispering Woods canopy.",
            "Sheldon keeps his steady pace through Whispering Woods."),
        3: ("Blaze naps against an oak in Whispering Woods, ears folded.",
            "Overconfident, Blaze settles in for a nap in Whispering Woods."),
        4: ("Sheldon passes the sleeping spot at the edge of Whispering Woods.",
            "Sheldon never stops, leaving Whispering Woods behind."),
        5: ("Blaze sprints while Sheldon nears the flags on Winding Trail.",
            "On Winding Trail, Blaze races the distance Sheldon already closed."),
        6: ("Sheldon crosses first as Blaze skids in on Winding Trail.",
            "At the end of Winding Trail, Sheldon wins and Blaze laughs."),
    }
    scenes = [
        Scene(
            index=i,
            image_prompt=texts[i][0],
            narration=texts[i][1],
            tones=[Tone(label="Playful")],
            image=ImageAsset(
                handle=f"fixture-{i}",
                created_from_prompt=texts[i][0],
                provider_tag="fixture",
            ),
        )
        for i in range(1, 7)
    ]
    project = StoryProject(
        id="race-fixture",
        status="complete",
        seed=SeedIdea(text="A fast Bunny and a slow Turtle had a race..."),
        style="cinematic, vibrant colors, wide shot",
        storyline=Storyline(
            text=(
                "Blaze the bunny challenges Sheldon the turtle to a race from "
                "Whispering Woods to the flags on Winding Trail, with a detour "
                "planned past Glass Grotto that never happens; slow and steady "
                "takes the day."
            ),
            tones=[Tone(label="Overconfident"), Tone(label="Joyful")],
        ),
        personas=[blaze, sheldon],
        locations=[woods, trail, grotto],
        scenes=scenes,
    )
    refresh_scene_links(project)
    return project


@pytest.fixture
def race_project() -> StoryProject:
    return make_race_project()


@pytest.fixture(scope="session")
def mock_provider() -> MockProvider:
    return MockProvider(42)


@pytest.fixture(scope="session")
def bunny_project(mock_provider) -> StoryProject:
    return create_project(
        SeedIdea(text="A fast Bunny and a slow Turtle had a race..."), mock_provider
    )


_SEED_THEMES = [
    "a race through the hills", "a lost lantern", "a rooftop garden heist",
    "the last ferry of summer", "a map drawn in chalk", "an orchestra of frogs",
]


def random_seed_idea(rng: random.Random) -> SeedIdea:
    return SeedIdea(
        text=f"A story about {rng.choice(_SEED_THEMES)} number {rng.randrange(10_000)}"
    )


def make_mock_project(seed: int) -> StoryProject:
    rng = random.Random(seed)
    return create_project(random_seed_idea(rng), MockProvider(seed))
