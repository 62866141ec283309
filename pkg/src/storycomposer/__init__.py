"""Story co-creation engine: decomposed story components, entity linking,
and selective regeneration of dependent scene prompts."""

__version__ = "0.1.0"
