"""HTTP facade over the story engine.

Every screen-level capability maps to a ``/v1`` endpoint: idea suggestions,
project creation (async job with a synchronous fast path), annotated
component reads, chat revisions, per-scene and bulk regeneration, undo, and
start-over. All project state lives in the :class:`ProjectStore`; restarting
the service loses nothing but in-flight jobs. Mutations on one project are
serialized through a per-project lock.

Error responses always carry a stable machine-readable code:

    validation_error, suggestion_not_found, project_not_found,
    component_not_found, job_not_found, scene_index_out_of_range,
    empty_instruction, name_collision, generation_failed, nothing_to_undo,
    storage_error
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from typing import Any, Callable, Literal, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import linking, pipeline
from .models import ComponentRef, StoryProject, SeedIdea, validate_project
from .providers import Provider, ProviderError
from .revision import RevisionEngine, RevisionError, RevisionFailedError
from .storage import ArchiveNotFoundError, ProjectStore, StorageError


class ApiError(Exception):
    def __init__(self, code: str, message: str, status: int = 400, detail: Any = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status
        self.detail = detail


_REVISION_STATUS = {
    "component_not_found": 404,
    "empty_instruction": 422,
    "scene_index_out_of_range": 422,
    "name_collision": 409,
    "generation_failed": 502,
    "nothing_to_undo": 409,
}


def _from_revision_error(exc: RevisionError) -> ApiError:
    detail = None
    if isinstance(exc, RevisionFailedError):
        detail = {"provider_error": str(exc.cause)}
    return ApiError(exc.code, str(exc), _REVISION_STATUS.get(exc.code, 400), detail)


# -- wire models -------------------------------------------------------------


class IdeaSuggestion(BaseModel):
    id: str
    text: str


class IdeaList(BaseModel):
    ideas: list[IdeaSuggestion]


class CreateProjectRequest(BaseModel):
    seed_text: Optional[str] = None
    suggestion_id: Optional[str] = None


class JobInfo(BaseModel):
    job_id: str
    status: Literal["pending", "running", "done", "error"]
    project_id: Optional[str] = None
    error: Optional[dict] = None


class SpanOut(BaseModel):
    entity_id: str
    kind: str
    name: str
    field: str
    start: int
    end: int


class ComponentOut(BaseModel):
    ref: str
    kind: str
    data: dict
    refs: list[SpanOut] = Field(default_factory=list)


class ReviseRequest(BaseModel):
    target: str
    instruction: str


class ReviseResponse(BaseModel):
    revision: dict
    propagation: dict
    changed_components: list[ComponentOut]


class StoryboardTile(BaseModel):
    index: int
    narration: str
    image_prompt: str
    image_handle: Optional[str]
    stale: bool
    tones: list[str]


class StoryboardOut(BaseModel):
    project_id: str
    grid: str = "3x2"
    storyline_out_of_sync: bool
    scenes: list[StoryboardTile]


def annotate_component(project: StoryProject, target: ComponentRef) -> ComponentOut:
    entities = project.entities()
    by_id = {e.id: e for e in entities}

    def spans(text: str, field: str) -> list[SpanOut]:
        return [
            SpanOut(
                entity_id=r.entity.value,
                kind=r.entity.kind.value,
                name=by_id[r.entity].name,
                field=field,
                start=r.start,
                end=r.end,
            )
            for r in linking.extract_refs(text, field, entities)
        ]

    if target.kind == "storyline":
        if project.storyline is None:
            raise ApiError("component_not_found", "storyline not generated yet", 404)
        return ComponentOut(
            ref="storyline",
            kind="storyline",
            data=project.storyline.model_dump(mode="json"),
            refs=spans(project.storyline.text, "text"),
        )
    if target.kind in ("persona", "location"):
        entity = project.find_entity(target.entity_id)
        if entity is None or entity.id.kind.value != target.kind:
            raise ApiError(
                "component_not_found", f"no such {target.kind}: {target.entity_id}", 404
            )
        return ComponentOut(
            ref=target.key(), kind=target.kind, data=entity.model_dump(mode="json")
        )
    scene = project.scene(target.scene_index)
    if scene is None:
        raise ApiError("component_not_found", f"no scene {target.scene_index}", 404)
    return ComponentOut(
        ref=f"scene/{scene.index}",
        kind="scene",
        data=scene.model_dump(mode="json"),
        refs=spans(scene.image_prompt, "image_prompt")
        + spans(scene.narration, "narration"),
    )


def storyboard_out(project: StoryProject) -> StoryboardOut:
    return StoryboardOut(
        project_id=project.id,
        storyline_out_of_sync=project.storyline_out_of_sync,
        scenes=[
            StoryboardTile(
                index=s.index,
                narration=s.narration,
                image_prompt=s.image_prompt,
                image_handle=s.image.handle if s.image else None,
                stale=s.stale,
                tones=[t.label for t in s.tones],
            )
            for s in sorted(project.scenes, key=lambda s: s.index)
        ],
    )


def create_app(
    store: ProjectStore,
    provider: Provider,
    clock: Optional[Callable[[], str]] = None,
) -> FastAPI:
    app = FastAPI(title="storycomposer", version="0.1.0")
    engine = RevisionEngine(provider, clock=clock)

    state = app.state
    state.store = store
    state.provider = provider
    state.engine = engine
    state.jobs: dict[str, JobInfo] = {}
    state.suggestions: dict[str, str] = {}
    state.locks: dict[str, threading.Lock] = {}
    state.locks_guard = threading.Lock()

    def project_lock(project_id: str) -> threading.Lock:
        with state.locks_guard:
            return state.locks.setdefault(project_id, threading.Lock())

    def load_project(project_id: str) -> StoryProject:
        try:
            return store.load(project_id)
        except ArchiveNotFoundError as exc:
            raise ApiError("project_not_found", str(exc), 404)
        except StorageError as exc:
            raise ApiError("storage_error", str(exc), 500)

    def session_path():
        return store.root / "session"

    def read_session() -> Optional[str]:
        path = session_path()
        if not path.exists():
            return None
        return json.loads(path.read_text()).get("current_project")

    def write_session(project_id: Optional[str]) -> None:
        store.root.mkdir(parents=True, exist_ok=True)
        session_path().write_text(json.dumps({"current_project": project_id}))

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    # -- ideas and creation --------------------------------------------------

    @app.get("/v1/ideas", response_model=IdeaList)
    def list_ideas():
        try:
            texts = pipeline.suggest_ideas(provider)
        except pipeline.PipelineError as exc:
            raise ApiError("generation_failed", str(exc), 502, {"step": exc.step})
        out = []
        for text in texts:
            sid = "idea-" + hashlib.sha256(text.encode()).hexdigest()[:8]
            state.suggestions[sid] = text
            out.append(IdeaSuggestion(id=sid, text=text))
        return IdeaList(ideas=out)

    def _resolve_seed(body: CreateProjectRequest) -> SeedIdea:
        if body.suggestion_id:
            text = state.suggestions.get(body.suggestion_id)
            if text is None:
                # Suggestion ids are content digests, so a deterministic
                # provider can reproduce them after a restart.
                try:
                    list_ideas()
                except ApiError:
                    pass
                text = state.suggestions.get(body.suggestion_id)
            if text is None:
                raise ApiError(
                    "suggestion_not_found",
                    f"unknown suggestion id {body.suggestion_id!r}",
                    404,
                )
            return SeedIdea(text=text, origin="ai_suggested")
        if not body.seed_text or not body.seed_text.strip():
            raise ApiError(
                "validation_error", "seed_text or suggestion_id is required", 422
            )
        return SeedIdea(text=body.seed_text, origin="user")

    def _run_create(seed: SeedIdea) -> StoryProject:
        project = pipeline.create_project(seed, provider)
        with project_lock(project.id):
            store.save(project)
        write_session(project.id)
        return project

    @app.post("/v1/projects")
    def create_project(body: CreateProjectRequest, sync: bool = False):
        seed = _resolve_seed(body)
        if sync:
            try:
                project = _run_create(seed)
            except pipeline.PipelineError as exc:
                raise ApiError("generation_failed", str(exc), 502, {"step": exc.step})
            return {
                "project_id": project.id,
                "project": project.model_dump(mode="json"),
            }

        job_id = uuid.uuid4().hex[:12]
        state.jobs[job_id] = JobInfo(job_id=job_id, status="pending")

        def worker():
            state.jobs[job_id].status = "running"
            try:
                project = _run_create(seed)
            except pipeline.PipelineError as exc:
                state.jobs[job_id].status = "error"
                state.jobs[job_id].error = {
                    "code": "generation_failed",
                    "message": str(exc),
                    "detail": {"step": exc.step},
                }
                return
            state.jobs[job_id].status = "done"
            state.jobs[job_id].project_id = project.id

        threading.Thread(target=worker, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/v1/jobs/{job_id}", response_model=JobInfo)
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise ApiError("job_not_found", f"unknown job {job_id!r}", 404)
        return job

    # -- reads ---------------------------------------------------------------

    @app.get("/v1/session")
    def get_session():
        return {"current_project": read_session()}

    @app.get("/v1/projects/{project_id}")
    def get_project(project_id: str):
        project = load_project(project_id)
        return project.model_dump(mode="json")

    @app.get("/v1/projects/{project_id}/validation")
    def get_validation(project_id: str):
        return validate_project(load_project(project_id)).model_dump(mode="json")

    @app.get("/v1/projects/{project_id}/storyboard", response_model=StoryboardOut)
    def get_storyboard(project_id: str):
        return storyboard_out(load_project(project_id))

    @app.get(
        "/v1/projects/{project_id}/components/{ref:path}", response_model=ComponentOut
    )
    def get_component(project_id: str, ref: str):
        project = load_project(project_id)
        try:
            target = ComponentRef.parse(ref)
        except ValueError as exc:
            raise ApiError("component_not_found", str(exc), 404)
        return annotate_component(project, target)

    # -- mutations -----------------------------------------------------------

    def _changed_components(
        project: StoryProject, target: ComponentRef, propagation
    ) -> list[ComponentOut]:
        out = [annotate_component(project, target)]
        for index in propagation.dirty_scenes:
            if target.kind == "scene" and target.scene_index == index:
                continue
            out.append(
                annotate_component(project, ComponentRef(kind="scene", scene_index=index))
            )
        if propagation.storyline_touched and target.kind != "storyline":
            out.append(annotate_component(project, ComponentRef(kind="storyline")))
        return out

    @app.post("/v1/projects/{project_id}/revise", response_model=ReviseResponse)
    def revise(project_id: str, body: ReviseRequest):
        with project_lock(project_id):
            project = load_project(project_id)
            try:
                target = ComponentRef.parse(body.target)
            except ValueError as exc:
                raise ApiError("component_not_found", str(exc), 404)
            try:
                updated, revision = app.state.engine.revise(
                    project, target, body.instruction
                )
            except RevisionError as exc:
                raise _from_revision_error(exc)
            store.save(updated)
        return ReviseResponse(
            revision=revision.model_dump(mode="json"),
            propagation=revision.propagation.model_dump(mode="json"),
            changed_components=_changed_components(updated, target, revision.propagation),
        )

    @app.post("/v1/projects/{project_id}/scenes/{index}/regenerate")
    def regenerate_scene(project_id: str, index: int):
        with project_lock(project_id):
            project = load_project(project_id)
            try:
                updated, revision = app.state.engine.regenerate_scene(project, index)
            except RevisionError as exc:
                raise _from_revision_error(exc)
            store.save(updated)
        return {
            "revision": revision.model_dump(mode="json"),
            "scene": annotate_component(
                updated, ComponentRef(kind="scene", scene_index=index)
            ).model_dump(mode="json"),
        }

    @app.post("/v1/projects/{project_id}/regenerate-stale")
    def regenerate_stale(project_id: str):
        with project_lock(project_id):
            project = load_project(project_id)
            try:
                updated, indices = app.state.engine.regenerate_all_stale(project)
            except RevisionError as exc:
                raise _from_revision_error(exc)
            if indices:
                store.save(updated)
        return {
            "regenerated": indices,
            "scenes": [
                annotate_component(
                    updated, ComponentRef(kind="scene", scene_index=i)
                ).model_dump(mode="json")
                for i in indices
            ],
        }

    @app.post("/v1/projects/{project_id}/undo")
    def undo(project_id: str):
        with project_lock(project_id):
            project = load_project(project_id)
            try:
                updated, marker = app.state.engine.undo(project)
            except RevisionError as exc:
                raise _from_revision_error(exc)
            store.save(updated)
        return {
            "revision": marker.model_dump(mode="json"),
            "project": updated.model_dump(mode="json"),
        }

    @app.post("/v1/projects/{project_id}/start-over")
    def start_over(project_id: str):
        if not store.exists(project_id):
            raise ApiError("project_not_found", f"no project {project_id!r}", 404)
        # The archive stays on disk; only the active-session pointer resets.
        if read_session() == project_id:
            write_session(None)
        return {"archived": project_id, "current_project": read_session()}

    return app


def create_app_from_env() -> FastAPI:
    """Entry point for ``uvicorn storycomposer.service:create_app_from_env``."""
    import os

    from .providers import make_provider

    store = ProjectStore(os.environ.get("STORYCOMPOSER_STORE", "./story-store"))
    provider = make_provider(
        os.environ.get("STORYCOMPOSER_PROVIDER", "mock"),
        seed=int(os.environ.get("STORYCOMPOSER_SEED", "0")),
        fixtures=os.environ.get("STORYCOMPOSER_FIXTURES"),
    )
    return create_app(store, provider)
