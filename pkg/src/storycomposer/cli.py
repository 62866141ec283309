"""Command-line client.

A thin wrapper over the HTTP API: each subcommand spins up the service
in-process (against the chosen store and provider) and talks to it through
the same ``/v1`` surface the web UI uses.
"""

from __future__ import annotations

import json
import sys

import click
from fastapi.testclient import TestClient

from .export import export_html, export_markdown
from .providers import ProviderError, make_provider
from .service import create_app
from .storage import ProjectStore


class Ctx:
    def __init__(self, store_dir: str, provider: str, seed_rng: int, fixtures: str | None):
        self.store = ProjectStore(store_dir)
        try:
            self.provider = make_provider(provider, seed=seed_rng, fixtures=fixtures)
        except ProviderError as exc:
            raise click.ClickException(str(exc))
        self.client = TestClient(create_app(self.store, self.provider))

    def call(self, method: str, path: str, **kwargs) -> dict:
        response = self.client.request(method, path, **kwargs)
        body = response.json()
        if response.status_code >= 400:
            code = body.get("code", response.status_code)
            raise click.ClickException(f"[{code}] {body.get('message', body)}")
        return body


@click.group()
@click.option("--store", "store_dir", default="./story-store", show_default=True,
              help="Project store directory.")
@click.option("--provider", default="mock", show_default=True,
              type=click.Choice(["mock", "replay", "record", "live"]))
@click.option("--seed-rng", default=0, show_default=True, type=int,
              help="Mock provider RNG seed.")
@click.option("--fixtures", default=None, help="Fixture dir for record/replay.")
@click.pass_context
def main(ctx, store_dir, provider, seed_rng, fixtures):
    """Co-create illustrated six-scene stories from a seed idea."""
    ctx.obj = Ctx(store_dir, provider, seed_rng, fixtures)


@main.command()
@click.pass_obj
def ideas(ctx: Ctx):
    """Show four AI-suggested seed ideas."""
    for item in ctx.call("GET", "/v1/ideas")["ideas"]:
        click.echo(f"{item['id']}  {item['text']}")


@main.command()
@click.argument("seed_text", nargs=-1)
@click.option("--suggestion", "suggestion_id", default=None,
              help="Use a suggestion id from `ideas` instead of free text.")
@click.pass_obj
def new(ctx: Ctx, seed_text, suggestion_id):
    """Generate a full project from a seed idea."""
    body = {"seed_text": " ".join(seed_text) or None, "suggestion_id": suggestion_id}
    out = ctx.call("POST", "/v1/projects?sync=true", json=body)
    project = out["project"]
    click.echo(f"project: {out['project_id']}")
    click.echo(f"storyline: {project['storyline']['text']}")
    click.echo(f"personas: {', '.join(p['name'] for p in project['personas'])}")
    click.echo(f"locations: {', '.join(l['name'] for l in project['locations'])}")
    click.echo(f"scenes: {len(project['scenes'])}")


@main.command()
@click.option("--project", "project_id", required=True)
@click.argument("ref", required=False)
@click.pass_obj
def show(ctx: Ctx, project_id, ref):
    """Show the storyboard, or one component (storyline, persona/<id>,
    location/<id>, scene/<n>) with its link annotations."""
    if ref is None:
        board = ctx.call("GET", f"/v1/projects/{project_id}/storyboard")
        if board["storyline_out_of_sync"]:
            click.echo("! storyline edited; scenes may be out of sync")
        for scene in board["scenes"]:
            stale = " [stale]" if scene["stale"] else ""
            click.echo(f"Scene {scene['index']}{stale}: {scene['narration']}")
        return
    component = ctx.call("GET", f"/v1/projects/{project_id}/components/{ref}")
    click.echo(json.dumps(component, indent=2, sort_keys=True))


@main.command()
@click.option("--project", "project_id", required=True)
@click.argument("target")
@click.argument("instruction", nargs=-1, required=True)
@click.pass_obj
def revise(ctx: Ctx, project_id, target, instruction):
    """Send a chat instruction against one component."""
    out = ctx.call(
        "POST",
        f"/v1/projects/{project_id}/revise",
        json={"target": target, "instruction": " ".join(instruction)},
    )
    prop = out["propagation"]
    click.echo(f"revision {out['revision']['id']} applied to {target}")
    if prop["dirty_scenes"]:
        click.echo(f"scenes affected: {', '.join(map(str, prop['dirty_scenes']))}")
    else:
        click.echo("no scenes affected")
    if prop["storyline_touched"]:
        click.echo("storyline text updated")


@main.command()
@click.option("--project", "project_id", required=True)
@click.option("--scene", "scene_index", type=int, default=None)
@click.option("--all-stale", is_flag=True, help="Regenerate every stale scene.")
@click.pass_obj
def regen(ctx: Ctx, project_id, scene_index, all_stale):
    """Regenerate one scene, or all stale scenes."""
    if all_stale:
        out = ctx.call("POST", f"/v1/projects/{project_id}/regenerate-stale")
        done = out["regenerated"]
        click.echo(f"regenerated: {', '.join(map(str, done)) if done else 'nothing stale'}")
        return
    if scene_index is None:
        raise click.UsageError("pass --scene N or --all-stale")
    ctx.call("POST", f"/v1/projects/{project_id}/scenes/{scene_index}/regenerate")
    click.echo(f"regenerated scene {scene_index}")


@main.command()
@click.option("--project", "project_id", required=True)
@click.pass_obj
def undo(ctx: Ctx, project_id):
    """Revert the most recent revision, including its propagation."""
    out = ctx.call("POST", f"/v1/projects/{project_id}/undo")
    click.echo(f"undid revision {out['revision']['undone_revision']}")


@main.command()
@click.option("--project", "project_id", required=True)
@click.option("--format", "fmt", type=click.Choice(["markdown", "html"]),
              default="markdown", show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None)
@click.pass_obj
def export(ctx: Ctx, project_id, fmt, output):
    """Write the 3x2 storyboard document."""
    project = ctx.call("GET", f"/v1/projects/{project_id}")
    board = ctx.call("GET", f"/v1/projects/{project_id}/storyboard")
    title = project["seed"]["text"]
    doc = export_markdown(title, board) if fmt == "markdown" else export_html(title, board)
    if output:
        with open(output, "w") as fh:
            fh.write(doc)
        click.echo(f"wrote {output}")
    else:
        sys.stdout.write(doc)


if __name__ == "__main__":
    main()
