"""Storyboard export: a 3x2 grid document with narrations."""

from __future__ import annotations

import html as _html


def _rows(scenes: list[dict]) -> list[list[dict]]:
    ordered = sorted(scenes, key=lambda s: s["index"])
    return [ordered[i : i + 3] for i in range(0, len(ordered), 3)]


def export_markdown(title: str, storyboard: dict) -> str:
    lines = [f"# Storyboard: {title}", ""]
    if storyboard.get("storyline_out_of_sync"):
        lines += ["> Storyline was edited; scenes may be out of sync.", ""]
    for row in _rows(storyboard["scenes"]):
        header = " | ".join(f"Scene {s['index']}" for s in row)
        sep = " | ".join("---" for _ in row)
        images = " | ".join(
            f"`{s['image_handle'] or 'no image'}`"
            + (" (stale)" if s["stale"] else "")
            for s in row
        )
        narrations = " | ".join(s["narration"].replace("|", "\\|") for s in row)
        lines += [f"| {header} |", f"| {sep} |", f"| {images} |", f"| {narrations} |", ""]
    return "\n".join(lines)


def export_html(title: str, storyboard: dict) -> str:
    e = _html.escape
    cells = []
    for row in _rows(storyboard["scenes"]):
        tds = []
        for s in row:
            stale = ' <em class="stale">stale</em>' if s["stale"] else ""
            tds.append(
                "<td>"
                f"<h3>Scene {s['index']}{stale}</h3>"
                f'<div class="image" data-handle="{e(s["image_handle"] or "")}">'
                f'{e(s["image_handle"] or "no image")}</div>'
                f"<p>{e(s['narration'])}</p>"
                "</td>"
            )
        cells.append("<tr>" + "".join(tds) + "</tr>")
    return (
        "<!doctype html>\n<html><head><meta charset='utf-8'>"
        f"<title>{e(title)}</title></head>\n"
        f"<body><h1>Storyboard: {e(title)}</h1>\n"
        '<table class="storyboard grid-3x2">\n' + "\n".join(cells) + "\n</table>"
        "</body></html>\n"
    )
