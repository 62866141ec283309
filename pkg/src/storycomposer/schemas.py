"""Structured-output schema registry.

Every provider call names one of these schemas; raw output is rejected and
re-prompted unless it parses as JSON and validates. Nothing unvalidated ever
enters a project.
"""

from __future__ import annotations

from .models import MAX_ENTITIES, MIN_ENTITIES, SCENE_COUNT, TONE_MAX_LEN

_NONEMPTY = {"type": "string", "minLength": 1}
_TONE = {"type": "string", "minLength": 1, "maxLength": TONE_MAX_LEN}
_TONES = {
    "type": "array",
    "items": _TONE,
    "minItems": 1,
    "maxItems": 3,
}

_PERSONA = {
    "type": "object",
    "required": ["name", "age", "clothing", "skin", "hair"],
    "properties": {
        "name": _NONEMPTY,
        "age": _NONEMPTY,
        "clothing": _NONEMPTY,
        "skin": _NONEMPTY,
        "hair": _NONEMPTY,
        "extra": {"type": "string"},
    },
    "additionalProperties": False,
}

_LOCATION = {
    "type": "object",
    "required": ["name", "description"],
    "properties": {"name": _NONEMPTY, "description": _NONEMPTY},
    "additionalProperties": False,
}

_SCENE = {
    "type": "object",
    "required": ["narration", "image_prompt"],
    "properties": {
        "narration": _NONEMPTY,
        "image_prompt": _NONEMPTY,
        "tones": {"type": "array", "items": _TONE},
    },
    "additionalProperties": False,
}

SCHEMAS: dict[str, dict] = {
    "ideas": {
        "type": "object",
        "required": ["ideas"],
        "properties": {
            "ideas": {
                "type": "array",
                "items": _NONEMPTY,
                "minItems": 4,
                "maxItems": 4,
            }
        },
        "additionalProperties": False,
    },
    "storyline": {
        "type": "object",
        "required": ["text", "characters", "locations"],
        "properties": {
            "text": _NONEMPTY,
            "characters": {
                "type": "array",
                "items": _NONEMPTY,
                "minItems": MIN_ENTITIES,
                "maxItems": MAX_ENTITIES,
            },
            "locations": {
                "type": "array",
                "items": _NONEMPTY,
                "minItems": MIN_ENTITIES,
                "maxItems": MAX_ENTITIES,
            },
        },
        "additionalProperties": False,
    },
    "tones": {
        "type": "object",
        "required": ["tones"],
        "properties": {"tones": _TONES},
        "additionalProperties": False,
    },
    "personas": {
        "type": "object",
        "required": ["personas"],
        "properties": {
            "personas": {
                "type": "array",
                "items": _PERSONA,
                "minItems": MIN_ENTITIES,
                "maxItems": MAX_ENTITIES,
            }
        },
        "additionalProperties": False,
    },
    "locations": {
        "type": "object",
        "required": ["locations"],
        "properties": {
            "locations": {
                "type": "array",
                "items": _LOCATION,
                "minItems": MIN_ENTITIES,
                "maxItems": MAX_ENTITIES,
            }
        },
        "additionalProperties": False,
    },
    "scenes": {
        "type": "object",
        "required": ["scenes"],
        "properties": {
            "scenes": {
                "type": "array",
                "items": _SCENE,
                "minItems": SCENE_COUNT,
                "maxItems": SCENE_COUNT,
            }
        },
        "additionalProperties": False,
    },
    "scene_render": {
        "type": "object",
        "required": ["narration"],
        "properties": {"narration": _NONEMPTY},
        "additionalProperties": False,
    },
    "revise_persona": {
        "type": "object",
        "required": ["persona"],
        "properties": {"persona": _PERSONA},
        "additionalProperties": False,
    },
    "revise_location": {
        "type": "object",
        "required": ["location"],
        "properties": {"location": _LOCATION},
        "additionalProperties": False,
    },
    "revise_storyline": {
        "type": "object",
        "required": ["storyline"],
        "properties": {
            "storyline": {
                "type": "object",
                "required": ["text"],
                "properties": {"text": _NONEMPTY, "tones": _TONES},
                "additionalProperties": False,
            }
        },
        "additionalProperties": False,
    },
    "revise_scene_field": {
        "type": "object",
        "required": ["text"],
        "properties": {"text": _NONEMPTY},
        "additionalProperties": False,
    },
}
