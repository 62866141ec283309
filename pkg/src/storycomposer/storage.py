"""Durable, diffable project storage.

Each component is its own JSON document so a single persona, scene, or
revision can be read (or diffed) without deserializing the whole project:

    projects/<id>/manifest
    projects/<id>/components/<component-id>
    projects/<id>/assets/<digest>
    projects/<id>/revisions/<n>

Saves are atomic: everything is written to a staging directory and swapped
into place, so a failure mid-save leaves any prior archive intact.
"""

from __future__ import annotations

import json
import shutil
import threading
import uuid
from pathlib import Path

from .models import (
    SCHEMA_VERSION,
    ImageAsset,
    Location,
    Persona,
    Revision,
    Scene,
    SeedIdea,
    Storyline,
    StoryProject,
)


class StorageError(Exception):
    pass


class ArchiveNotFoundError(StorageError):
    pass


class CorruptArchiveError(StorageError):
    def __init__(self, record: str, detail: str):
        super().__init__(f"corrupt or missing record {record!r}: {detail}")
        self.record = record


class MigrationError(StorageError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def serialize_project(project: StoryProject) -> str:
    """Canonical byte form used for round-trip and atomicity comparisons."""
    return canonical_json(project.model_dump(mode="json"))


class ProjectStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()

    def _project_dir(self, project_id: str) -> Path:
        return self.root / "projects" / project_id

    def list_ids(self) -> list[str]:
        base = self.root / "projects"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if not p.name.startswith("."))

    def exists(self, project_id: str) -> bool:
        return (self._project_dir(project_id) / "manifest").exists()

    # Overridable write hook; tests inject faults here.
    def _write_text(self, path: Path, text: str) -> None:
        path.write_text(text)

    def save(self, project: StoryProject) -> str:
        files: dict[str, str] = {}
        components: list[str] = ["seed"]
        files["components/seed"] = canonical_json(project.seed.model_dump(mode="json"))
        if project.storyline is not None:
            components.append("storyline")
            files["components/storyline"] = canonical_json(
                project.storyline.model_dump(mode="json")
            )
        for entity in project.entities():
            cid = f"{entity.id.kind.value}-{entity.id.value}"
            components.append(cid)
            files[f"components/{cid}"] = canonical_json(entity.model_dump(mode="json"))
        for scene in project.scenes:
            cid = f"scene-{scene.index}"
            components.append(cid)
            record = scene.model_dump(mode="json", exclude={"image"})
            record["image_handle"] = scene.image.handle if scene.image else None
            files[f"components/{cid}"] = canonical_json(record)
            if scene.image is not None:
                files[f"assets/{scene.image.handle}"] = canonical_json(
                    scene.image.model_dump(mode="json")
                )
        for revision in project.revisions:
            files[f"revisions/{revision.id}"] = canonical_json(
                revision.model_dump(mode="json")
            )
        files["manifest"] = canonical_json(
            {
                "schema_version": project.schema_version,
                "project_id": project.id,
                "status": project.status,
                "style": project.style,
                "storyline_out_of_sync": project.storyline_out_of_sync,
                "components": components,
                "revision_count": len(project.revisions),
            }
        )

        with self._lock:
            staging = self.root / "projects" / f".staging-{uuid.uuid4().hex}"
            try:
                for rel, text in sorted(files.items()):
                    path = staging / rel
                    path.parent.mkdir(parents=True, exist_ok=True)
                    self._write_text(path, text)
            except OSError as exc:
                shutil.rmtree(staging, ignore_errors=True)
                raise StorageError(f"save failed before commit: {exc}") from exc

            final = self._project_dir(project.id)
            final.parent.mkdir(parents=True, exist_ok=True)
            if final.exists():
                trash = self.root / "projects" / f".old-{uuid.uuid4().hex}"
                final.rename(trash)
                staging.rename(final)
                shutil.rmtree(trash, ignore_errors=True)
            else:
                staging.rename(final)
        return project.id

    def _read_record(self, base: Path, rel: str) -> dict:
        path = base / rel
        if not path.exists():
            raise CorruptArchiveError(rel, "file missing")
        try:
            return json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptArchiveError(rel, str(exc)) from exc

    def read_component(self, project_id: str, component_id: str) -> dict:
        """Read one component record without loading the rest of the project."""
        base = self._project_dir(project_id)
        if not base.is_dir():
            raise ArchiveNotFoundError(f"no archive for project {project_id!r}")
        return self._read_record(base, f"components/{component_id}")

    def load(self, project_id: str) -> StoryProject:
        base = self._project_dir(project_id)
        if not (base / "manifest").exists():
            raise ArchiveNotFoundError(f"no archive for project {project_id!r}")
        manifest = self._read_record(base, "manifest")
        version = manifest.get("schema_version")
        if version != SCHEMA_VERSION:
            raise MigrationError(
                f"archive schema_version {version} is not supported "
                f"(expected {SCHEMA_VERSION}); migrate it explicitly"
            )

        seed = storyline = None
        personas: list[Persona] = []
        locations: list[Location] = []
        scenes: list[Scene] = []
        for cid in manifest["components"]:
            record = self._read_record(base, f"components/{cid}")
            try:
                if cid == "seed":
                    seed = SeedIdea(**record)
                elif cid == "storyline":
                    storyline = Storyline(**record)
                elif cid.startswith("persona-"):
                    personas.append(Persona(**record))
                elif cid.startswith("location-"):
                    locations.append(Location(**record))
                elif cid.startswith("scene-"):
                    handle = record.pop("image_handle", None)
                    image = None
                    if handle:
                        image = ImageAsset(**self._read_record(base, f"assets/{handle}"))
                    scenes.append(Scene(image=image, **record))
                else:
                    raise CorruptArchiveError(cid, "unknown component kind")
            except (TypeError, ValueError) as exc:
                raise CorruptArchiveError(cid, str(exc)) from exc
        if seed is None:
            raise CorruptArchiveError("seed", "manifest lists no seed component")

        revisions = []
        for n in range(1, manifest.get("revision_count", 0) + 1):
            record = self._read_record(base, f"revisions/{n}")
            try:
                revisions.append(Revision(**record))
            except (TypeError, ValueError) as exc:
                raise CorruptArchiveError(f"revisions/{n}", str(exc)) from exc

        return StoryProject(
            id=manifest["project_id"],
            schema_version=version,
            status=manifest["status"],
            seed=seed,
            style=manifest.get("style", ""),
            storyline=storyline,
            personas=personas,
            locations=locations,
            scenes=scenes,
            revisions=revisions,
            storyline_out_of_sync=manifest.get("storyline_out_of_sync", False),
        )
