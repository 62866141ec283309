"""Provider gateway: structured-output validation, retries, mock, record/replay.

Every outbound generation goes through :func:`generate`, which re-prompts on
schema violations (with the validation errors appended) up to the request
budget. The :class:`MockProvider` is the workhorse for all testing: it is a
pure function of (seed, prompt, schema id) and synthesizes schema-valid JSON
from whatever names and entity blocks the prompt embeds, so end-to-end link
and propagation behavior can be exercised without any network.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from pathlib import Path
from typing import Any, Literal, Optional, Protocol

import jsonschema
from pydantic import BaseModel, Field

from .models import ImageAsset
from .schemas import SCHEMAS

Modality = Literal["text", "text+image"]


class ProviderRequest(BaseModel):
    prompt: str
    schema_id: str
    modality: Modality = "text"
    budget: int = Field(default=3, ge=1)


class ProviderResponse(BaseModel):
    raw: str
    parsed: Optional[Any] = None
    image: Optional[ImageAsset] = None
    attempts: int


class ProviderError(Exception):
    """Base class for everything the gateway can raise."""


class TransportError(ProviderError):
    """The provider could not be reached; retriable by the caller."""


class GenerationFailed(ProviderError):
    """Output never validated within the attempt budget."""

    def __init__(self, schema_id: str, attempts: int, errors: list[str]):
        super().__init__(
            f"output failed {schema_id!r} validation after {attempts} attempt(s): "
            + "; ".join(errors[-3:])
        )
        self.schema_id = schema_id
        self.attempts = attempts
        self.errors = errors


class ReplayMissError(ProviderError):
    def __init__(self, digest: str):
        super().__init__(f"no recorded fixture for request digest {digest}")
        self.digest = digest


class Provider(Protocol):
    fingerprint: str

    def complete(
        self, prompt: str, schema_id: str, modality: Modality
    ) -> tuple[str, Optional[ImageAsset]]: ...


def _validate(raw: str, schema_id: str) -> tuple[Optional[Any], list[str]]:
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError as exc:
        return None, [f"not valid JSON: {exc}"]
    validator = jsonschema.Draft202012Validator(SCHEMAS[schema_id])
    errors = [e.message for e in validator.iter_errors(parsed)]
    return (parsed, []) if not errors else (None, errors)


def generate(request: ProviderRequest, provider: Provider) -> ProviderResponse:
    """Call the provider, validating output and re-prompting on failure."""
    if request.schema_id not in SCHEMAS:
        raise ProviderError(f"unknown schema id {request.schema_id!r}")
    prompt = request.prompt
    raw = ""
    all_errors: list[str] = []
    for attempt in range(1, request.budget + 1):
        raw, image = provider.complete(prompt, request.schema_id, request.modality)
        parsed, errors = _validate(raw, request.schema_id)
        if parsed is not None:
            return ProviderResponse(raw=raw, parsed=parsed, image=image, attempts=attempt)
        all_errors.extend(errors)
        prompt = (
            request.prompt
            + "\n\nThe previous output was invalid:\n"
            + "\n".join(f"- {e}" for e in errors)
            + "\nReturn corrected JSON only."
        )
    raise GenerationFailed(request.schema_id, request.budget, all_errors)


# ---------------------------------------------------------------------------
# Deterministic mock provider
# ---------------------------------------------------------------------------

_PERSONA_NAMES = [
    "Blaze", "Sheldon", "Juniper", "Orin", "Tansy", "Bram",
    "Marisol", "Pico", "Wren", "Caspian", "Isolde", "Fenwick",
]
_LOCATION_NAMES = [
    "Whispering Woods", "Sunstone Meadow", "Glimmer Cove", "Old Mill Pond",
    "Cinder Peak", "Larkspur Valley", "Moonlit Harbor", "Bramble Hollow",
]
_TONE_POOL = ["Joyful", "Tense", "Hopeful", "Playful", "Bittersweet", "Bold", "Wistful"]
_AGES = ["a young child", "a teenager", "in their twenties", "middle-aged", "elderly"]
_CLOTHING = [
    "a patched green cloak", "a striped racing jersey", "a sunflower-yellow dress",
    "sturdy leather overalls", "a silver windbreaker",
]
_SKIN = ["fair and freckled", "warm brown", "olive-toned", "deep umber", "pale with rosy cheeks"]
_HAIR = ["curly copper hair", "a sleek black braid", "tousled sandy hair", "silver locks", "a neat auburn bob"]
_ACTIONS = [
    "races past the old signpost", "pauses to catch their breath",
    "shares a quiet laugh", "studies the winding path ahead",
    "waves to a crowd of onlookers", "stumbles and recovers with a grin",
]
_FLOURISHES = [
    "carrying a well-worn satchel", "with a determined glint in the eye",
    "humming an old traveling song", "trailed by falling leaves",
]
_IDEA_SHAPES = [
    "A fast {p} and a slow {q} settle a rivalry with a race through {loc}.",
    "{p} discovers a hidden door in {loc} and must decide who to trust with it.",
    "After a storm scatters the harvest, {p} and {q} rebuild {loc} together.",
    "{p} trains all season to win the lantern festival held at {loc}.",
]

_CHAR_LINE = re.compile(r"^Characters:\s*(.+)$", re.MULTILINE)
_LOC_LINE = re.compile(r"^Locations:\s*(.+)$", re.MULTILINE)
_PERSONA_BLOCK = re.compile(r"^== Persona: (.+) ==$", re.MULTILINE)
_LOCATION_BLOCK = re.compile(r"^== Location: (.+) ==$", re.MULTILINE)
_SCENE_LINE = re.compile(r"^Scene: (.*)$", re.MULTILINE)
_COMPONENT_BLOCK = re.compile(r"<component>\n(.*?)\n</component>", re.DOTALL)
_INSTRUCTION_BLOCK = re.compile(r"<instruction>\n(.*?)\n</instruction>", re.DOTALL)
_FIELD_LINE = re.compile(r"^Field: (.+)$", re.MULTILINE)

_SET_INSTR = re.compile(r'set\s+(\w+)\s+to\s+"([^"]*)"', re.IGNORECASE)
_RENAME_INSTR = re.compile(r'rename\s+to\s+"([^"]+)"', re.IGNORECASE)
_REPLACE_INSTR = re.compile(r'replace\s+"([^"]+)"\s+with\s+"([^"]*)"', re.IGNORECASE)


def prompt_digest(prompt: str, schema_id: str = "", modality: str = "") -> str:
    h = hashlib.sha256()
    h.update(schema_id.encode())
    h.update(b"\x00")
    h.update(modality.encode())
    h.update(b"\x00")
    h.update(prompt.encode())
    return h.hexdigest()


class MockProvider:
    """Deterministic offline provider.

    Same seed and same request always produce byte-identical output. For
    revision prompts it honors a tiny instruction grammar so tests can edit
    components predictably:

    - ``rename to "New Name"``
    - ``set <field> to "value"``
    - ``replace "old" with "new"``

    Anything else deterministically embellishes the component's free-text
    field. Images are placeholder assets whose handle is the digest of the
    generating prompt.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.fingerprint = f"mock:{seed}"

    def complete(
        self, prompt: str, schema_id: str, modality: Modality
    ) -> tuple[str, Optional[ImageAsset]]:
        rng = random.Random(f"{self.seed}|{schema_id}|{prompt_digest(prompt)}")
        handler = getattr(self, f"_gen_{schema_id}", None)
        if handler is None:
            raise ProviderError(f"mock provider has no handler for schema {schema_id!r}")
        payload = handler(prompt, rng)
        raw = json.dumps(payload, indent=2, sort_keys=True)
        image = None
        if modality == "text+image":
            image = ImageAsset(
                handle=prompt_digest(prompt),
                created_from_prompt=prompt,
                provider_tag=self.fingerprint,
            )
        return raw, image

    # -- per-schema synthesis ------------------------------------------------

    def _gen_ideas(self, prompt: str, rng: random.Random) -> dict:
        ideas = []
        for shape in rng.sample(_IDEA_SHAPES, 4):
            p, q = rng.sample(_PERSONA_NAMES, 2)
            ideas.append(shape.format(p=p, q=q, loc=rng.choice(_LOCATION_NAMES)))
        return {"ideas": ideas}

    def _gen_storyline(self, prompt: str, rng: random.Random) -> dict:
        characters = rng.sample(_PERSONA_NAMES, rng.randint(1, 3))
        locations = rng.sample(_LOCATION_NAMES, rng.randint(1, 3))
        sentences = [
            f"In {locations[0]}, {characters[0]} dreamed of proving themselves."
        ]
        for name in characters[1:]:
            sentences.append(f"{name} joined the journey with doubts of their own.")
        for name in locations[1:]:
            sentences.append(f"Their path wound onward through {name}.")
        sentences.append(
            f"By the end, {characters[0]} understood that steady hearts finish what "
            "bold starts begin."
        )
        return {
            "text": " ".join(sentences),
            "characters": characters,
            "locations": locations,
        }

    def _gen_tones(self, prompt: str, rng: random.Random) -> dict:
        return {"tones": rng.sample(_TONE_POOL, rng.randint(1, 3))}

    def _gen_personas(self, prompt: str, rng: random.Random) -> dict:
        names = _parse_name_line(_CHAR_LINE, prompt)
        personas = []
        for name in names:
            r = random.Random(f"{self.seed}|persona|{name}")
            personas.append(
                {
                    "name": name,
                    "age": r.choice(_AGES),
                    "clothing": r.choice(_CLOTHING),
                    "skin": r.choice(_SKIN),
                    "hair": r.choice(_HAIR),
                    "extra": f"Known around camp as {name} the steadfast.",
                }
            )
        return {"personas": personas}

    def _gen_locations(self, prompt: str, rng: random.Random) -> dict:
        names = _parse_name_line(_LOC_LINE, prompt)
        locations = []
        for name in names:
            r = random.Random(f"{self.seed}|location|{name}")
            locations.append(
                {
                    "name": name,
                    "description": (
                        f"{name} is {r.choice(['misty', 'sunlit', 'wind-swept', 'mossy'])} "
                        f"and {r.choice(['quiet', 'bustling', 'half-forgotten'])}, "
                        f"dotted with {r.choice(['tall pines', 'round stones', 'wildflowers'])}."
                    ),
                }
            )
        return {"locations": locations}

    def _gen_scenes(self, prompt: str, rng: random.Random) -> dict:
        personas = _PERSONA_BLOCK.findall(prompt) or ["The wanderer"]
        locations = _LOCATION_BLOCK.findall(prompt) or ["the open road"]
        scenes = []
        for i in range(6):
            main = personas[i % len(personas)]
            loc = locations[i % len(locations)]
            cast = [main]
            if len(personas) > 1 and rng.random() < 0.6:
                other = personas[(i + 1) % len(personas)]
                if other != main:
                    cast.append(other)
            action = rng.choice(_ACTIONS)
            joined = " and ".join(cast)
            scenes.append(
                {
                    "image_prompt": f"{joined} {action} in {loc}, "
                    f"{rng.choice(_FLOURISHES)}.",
                    "narration": f"In {loc}, {joined} {action}.",
                    "tones": rng.sample(_TONE_POOL, rng.randint(1, 2)),
                }
            )
        return {"scenes": scenes}

    def _gen_scene_render(self, prompt: str, rng: random.Random) -> dict:
        names = _PERSONA_BLOCK.findall(prompt) + _LOCATION_BLOCK.findall(prompt)
        body = _SCENE_LINE.search(prompt)
        lead = body.group(1).split(",")[0] if body else "The moment unfolds"
        mention = f" {', '.join(names)} hold the frame." if names else ""
        return {"narration": f"{lead}.{mention}"}

    def _gen_revise_persona(self, prompt: str, rng: random.Random) -> dict:
        component = _parse_component_json(prompt)
        instruction = _parse_instruction(prompt)
        persona = _apply_instruction(component, instruction, free_field="extra", rng=rng)
        persona.setdefault("extra", "")
        return {"persona": persona}

    def _gen_revise_location(self, prompt: str, rng: random.Random) -> dict:
        component = _parse_component_json(prompt)
        instruction = _parse_instruction(prompt)
        return {
            "location": _apply_instruction(
                component, instruction, free_field="description", rng=rng
            )
        }

    def _gen_revise_storyline(self, prompt: str, rng: random.Random) -> dict:
        component = _parse_component_json(prompt)
        instruction = _parse_instruction(prompt)
        out = _apply_instruction(component, instruction, free_field="text", rng=rng)
        return {"storyline": {"text": out["text"], "tones": out.get("tones") or ["Hopeful"]}}

    def _gen_revise_scene_field(self, prompt: str, rng: random.Random) -> dict:
        m = _COMPONENT_BLOCK.search(prompt)
        text = m.group(1) if m else ""
        instruction = _parse_instruction(prompt)
        set_m = _SET_INSTR.search(instruction)
        rep_m = _REPLACE_INSTR.search(instruction)
        if set_m:
            text = set_m.group(2)
        elif rep_m:
            text = text.replace(rep_m.group(1), rep_m.group(2))
        else:
            text = f"{text} {rng.choice(_FLOURISHES)}."
        return {"text": text}


def _parse_name_line(pattern: re.Pattern, prompt: str) -> list[str]:
    m = pattern.search(prompt)
    if not m:
        return []
    return [n.strip() for n in m.group(1).split(",") if n.strip()]


def _parse_component_json(prompt: str) -> dict:
    m = _COMPONENT_BLOCK.search(prompt)
    if not m:
        return {}
    try:
        return json.loads(m.group(1))
    except json.JSONDecodeError:
        return {}


def _parse_instruction(prompt: str) -> str:
    m = _INSTRUCTION_BLOCK.search(prompt)
    return m.group(1).strip() if m else ""


def _apply_instruction(
    component: dict, instruction: str, free_field: str, rng: random.Random
) -> dict:
    out = dict(component)
    rename = _RENAME_INSTR.search(instruction)
    if rename:
        out["name"] = rename.group(1)
        return out
    set_m = _SET_INSTR.search(instruction)
    if set_m and set_m.group(1) in out:
        out[set_m.group(1)] = set_m.group(2)
        return out
    rep_m = _REPLACE_INSTR.search(instruction)
    if rep_m:
        for key, value in out.items():
            if isinstance(value, str):
                out[key] = value.replace(rep_m.group(1), rep_m.group(2))
        return out
    current = out.get(free_field) or ""
    out[free_field] = f"{current} {rng.choice(_FLOURISHES)}.".strip()
    return out


# ---------------------------------------------------------------------------
# Record / replay
# ---------------------------------------------------------------------------


class RecordReplayProvider:
    """Persist or serve (request digest -> response) fixtures on disk.

    Record mode wraps a live provider and writes one JSON file per request
    digest. Replay mode never touches the inner provider; a missing fixture
    raises :class:`ReplayMissError` naming the digest, and a corrupt fixture
    raises :class:`ProviderError` rather than crashing.
    """

    def __init__(
        self,
        mode: Literal["record", "replay"],
        store: str | Path,
        inner: Provider | None = None,
    ):
        if mode == "record" and inner is None:
            raise ValueError("record mode requires an inner provider")
        self.mode = mode
        self.store = Path(store)
        self.inner = inner
        self.fingerprint = f"{mode}:{self.store}"

    def _path(self, digest: str) -> Path:
        return self.store / f"{digest}.json"

    def complete(
        self, prompt: str, schema_id: str, modality: Modality
    ) -> tuple[str, Optional[ImageAsset]]:
        digest = prompt_digest(prompt, schema_id, modality)
        if self.mode == "replay":
            path = self._path(digest)
            if not path.exists():
                raise ReplayMissError(digest)
            try:
                record = json.loads(path.read_text())
                raw = record["raw"]
                image = ImageAsset(**record["image"]) if record.get("image") else None
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"corrupt fixture {path.name}: {exc}") from exc
            return raw, image

        raw, image = self.inner.complete(prompt, schema_id, modality)
        self.store.mkdir(parents=True, exist_ok=True)
        record = {
            "prompt": prompt,
            "schema_id": schema_id,
            "modality": modality,
            "raw": raw,
            "image": image.model_dump() if image else None,
        }
        self._path(digest).write_text(json.dumps(record, indent=2, sort_keys=True))
        return raw, image


# ---------------------------------------------------------------------------
# Fault-injection helpers (also used by the acceptance suite)
# ---------------------------------------------------------------------------


def make_provider(
    kind: Literal["mock", "replay", "record", "live"],
    seed: int = 0,
    fixtures: str | Path | None = None,
) -> Provider:
    """Build the provider named by a CLI flag or service config."""
    if kind == "mock":
        return MockProvider(seed)
    if kind in ("replay", "record"):
        if fixtures is None:
            raise ProviderError(f"{kind} provider needs a fixture directory")
        inner = MockProvider(seed) if kind == "record" else None
        return RecordReplayProvider(kind, fixtures, inner=inner)
    raise ProviderError(
        "no live adapter is bundled; record fixtures against your own provider "
        "and run with --provider replay"
    )


class ScriptedProvider:
    """Replays a fixed list of raw outputs; an Exception entry is raised."""

    def __init__(self, outputs: list[str | Exception], fingerprint: str = "scripted"):
        self.outputs = list(outputs)
        self.fingerprint = fingerprint
        self.calls = 0

    def complete(self, prompt, schema_id, modality):
        if not self.outputs:
            raise TransportError("scripted provider exhausted")
        self.calls += 1
        out = self.outputs.pop(0)
        if isinstance(out, Exception):
            raise out
        return out, None


class FlakyProvider:
    """Fails the first ``failures`` calls, then delegates to ``inner``.

    ``mode='malformed'`` emits non-JSON garbage (a validation failure);
    ``mode='transport'`` raises :class:`TransportError`.
    """

    def __init__(
        self,
        inner: Provider,
        failures: int,
        mode: Literal["malformed", "transport"] = "malformed",
    ):
        self.inner = inner
        self.failures = failures
        self.mode = mode
        self.fingerprint = f"flaky:{inner.fingerprint}"

    def complete(self, prompt, schema_id, modality):
        if self.failures > 0:
            self.failures -= 1
            if self.mode == "transport":
                raise TransportError("injected transport failure")
            return "<<not json>>", None
        return self.inner.complete(prompt, schema_id, modality)
