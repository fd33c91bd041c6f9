"""Command line surface: generate floors, play, evaluate, bench, serve.

Subcommands operate on the in-process engine except `serve` (hosts the
session service) and the remote flavors of `play` and `eval`, which talk
to a running service over the wire like any other client.
"""

from __future__ import annotations

import json
import os
import sys
import threading
import time

import click

from towerforge.actions import (
    Action,
    CAMERA_LEFT,
    CAMERA_RIGHT,
    MOVE_BACK,
    MOVE_FORWARD,
    STRAFE_LEFT,
    STRAFE_RIGHT,
)
from towerforge.errors import TowerforgeError
from towerforge.evaluation import make_protocol, measure_throughput, run_protocol
from towerforge.layout import assemble_floor
from towerforge.rooms import default_template_library, validate_template_library
from towerforge.serialize import canonical_dumps
from towerforge.simulator import EpisodeConfig, REWARD_MODES, Simulator
from towerforge.themes import ALL_THEMES, VisualTheme

DEFAULT_PORT = 8808

# One glyph per raster entry: tile kinds 0..13, then the agent marker.
TILE_CHARS = ".#~>.koB_E=,+L@ "


def _effective_port(port: int) -> int:
    """TOWERFORGE_PORT beats the flag so wrappers can pin one port."""
    env = os.environ.get("TOWERFORGE_PORT")
    if env is None:
        return port
    try:
        return int(env)
    except ValueError:
        raise click.ClickException(f"TOWERFORGE_PORT {env!r} is not an integer")


def _parse_themes(themes: str | None) -> tuple[VisualTheme, ...]:
    if not themes:
        return ALL_THEMES
    out = []
    for name in themes.split(","):
        name = name.strip()
        try:
            out.append(VisualTheme(name))
        except ValueError:
            known = ", ".join(t.value for t in ALL_THEMES)
            raise click.ClickException(f"unknown theme {name!r}; themes: {known}")
    return tuple(out)


@click.group()
def main():
    """Procedural tower floors: generation, play, evaluation, serving."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True, help="Tower seed.")
@click.option("--floor", type=int, default=0, show_default=True, help="Floor index.")
@click.option("--themes", default=None, help="Comma-separated theme subset.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write plan JSON here instead of stdout.")
def generate(seed, floor, themes, out):
    """Assemble one floor and emit its plan as canonical JSON."""
    try:
        plan = assemble_floor(floor, seed, allowed_themes=_parse_themes(themes))
    except TowerforgeError as exc:
        raise click.ClickException(f"{exc.code}: {exc}")
    text = plan.canonical()
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote floor {floor} of tower {seed} to {out}")
    else:
        click.echo(text)


@main.command("validate-templates")
def validate_templates():
    """Check every bundled room template against the authoring rules."""
    library = default_template_library()
    violations = validate_template_library(library)
    click.echo(f"{len(library.templates)} templates, {len(violations)} violations")
    for v in violations:
        click.echo(f"  {v.rule}: {v.detail}")
    if violations:
        sys.exit(1)


def _chord_action(chord: str) -> Action:
    """Map a key chord to one action; forward wins over back."""
    fb = MOVE_FORWARD if "w" in chord else (MOVE_BACK if "s" in chord else 0)
    lr = STRAFE_LEFT if "a" in chord else (STRAFE_RIGHT if "d" in chord else 0)
    cam = CAMERA_LEFT if "q" in chord else (CAMERA_RIGHT if "e" in chord else 0)
    jump = 1 if ("x" in chord or " " in chord) else 0
    return Action(fb, lr, cam, jump)


def _draw_frame(payload: dict, palette: list[int], total_reward: float) -> None:
    from towerforge.service.client import decode_observation

    obs = decode_observation(payload)
    scale = obs.shape[0] // 21
    window = obs[::scale, ::scale]
    reverse = {code: entry for entry, code in enumerate(palette)}
    for row in window:
        click.echo("".join(TILE_CHARS[reverse.get(int(v), 1)] for v in row))
    click.echo(
        f"floor {payload['floor']}  keys {payload['keys']}  "
        f"time {payload['time']}  reward {total_reward:g}"
    )


@main.command()
@click.option("--url", default=None, help="Session service URL; omit to play in-process.")
@click.option("--seed", type=int, default=0, show_default=True, help="Tower seed.")
@click.option("--floors", type=int, default=25, show_default=True, help="Tower height.")
@click.option("--reward-mode", type=click.Choice(REWARD_MODES), default="sparse",
              show_default=True)
@click.option("--themes", default=None, help="Comma-separated theme subset.")
@click.option("--script", type=click.File("r"), default=None,
              help="Chord-per-line input instead of the keyboard.")
@click.option("--max-steps", type=int, default=2000, show_default=True)
def play(url, seed, floors, reward_mode, themes, script, max_steps):
    """Terminal play: w/s move, a/d strafe, q/e turn, x jump, quit exits."""
    chords = iter(line.strip() for line in script) if script else None

    def next_chord() -> str | None:
        if chords is not None:
            return next(chords, None)
        try:
            return click.prompt("", default="", show_default=False, prompt_suffix="> ")
        except (EOFError, click.Abort):
            return None

    config_json = {
        "tower_seed": seed,
        "max_floor": floors,
        "reward_mode": reward_mode,
        "allowed_themes": [t.value for t in _parse_themes(themes)],
    }
    try:
        if url is None:
            _play_local(config_json, next_chord, max_steps)
        else:
            _play_remote(url, config_json, next_chord, max_steps)
    except TowerforgeError as exc:
        raise click.ClickException(f"{exc.code}: {exc}")


def _play_local(config_json: dict, next_chord, max_steps: int) -> None:
    sim = Simulator(EpisodeConfig.from_json(config_json))
    result = sim.reset()
    total = result.reward
    for _ in range(max_steps):
        _draw_frame(result.to_json(), sim.palette, total)
        if sim.done:
            break
        chord = next_chord()
        if chord is None or chord == "quit":
            break
        result = sim.step(_chord_action(chord))
        total += result.reward
    click.echo(f"done={sim.done} outcome={sim.outcome} reward={total:g}")


def _play_remote(url: str, config_json: dict, next_chord, max_steps: int) -> None:
    from towerforge.service.client import ServiceClient

    with ServiceClient(url) as client:
        created = client.create_session(config_json)
        session_id = created["session_id"]
        payload = created["step"]
        palette = client.info(session_id)["palette"]
        floor = payload["floor"]
        total = payload["reward"]
        try:
            for _ in range(max_steps):
                _draw_frame(payload, palette, total)
                if payload["done"]:
                    break
                chord = next_chord()
                if chord is None or chord == "quit":
                    break
                from towerforge.actions import flatten_action

                payload = client.step(session_id, flatten_action(_chord_action(chord)))["step"]
                total += payload["reward"]
                if payload["floor"] != floor and not payload["done"]:
                    floor = payload["floor"]
                    palette = client.info(session_id)["palette"]
            click.echo(
                f"done={payload['done']} outcome={payload['outcome']} reward={total:g}"
            )
        finally:
            client.close_session(session_id)


@main.command("eval")
@click.option("--protocol", "protocol_mode", type=click.Choice(["none", "weak", "strong"]),
              default="weak", show_default=True)
@click.option("--agent", type=click.Choice(["random", "solver", "remote"]),
              default="random", show_default=True)
@click.option("--seed", "protocol_seed", type=int, default=0, show_default=True,
              help="Protocol derivation seed.")
@click.option("--floors", type=int, default=25, show_default=True, help="Tower height.")
@click.option("--reward-mode", type=click.Choice(REWARD_MODES), default="sparse",
              show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--max-actions", type=int, default=5000, show_default=True)
@click.option("--port", type=int, default=DEFAULT_PORT, show_default=True,
              help="Listen port when --agent remote.")
@click.option("--out", type=click.Path(dir_okay=False), default="report.json",
              show_default=True)
def eval_command(protocol_mode, agent, protocol_seed, floors, reward_mode, workers,
                 max_actions, port, out):
    """Run an evaluation protocol and write the report JSON."""
    protocol = make_protocol(protocol_mode, protocol_seed)
    if agent == "remote":
        report = _eval_remote(protocol, floors, reward_mode, port)
    else:
        report = run_protocol(
            protocol,
            agent=agent,
            max_floor=floors,
            reward_mode=reward_mode,
            max_actions=max_actions,
            workers=workers,
        )
    data = report.to_json()
    data["fingerprint"] = report.fingerprint()
    with open(out, "w") as fh:
        fh.write(canonical_dumps(data) + "\n")
    agg = data["aggregates"]
    click.echo(
        f"{data['agent']} on {protocol_mode}: {agg['episodes']} episodes, "
        f"mean reward {agg['mean_reward']:.3f}, mean floors {agg['mean_floors']:.2f}, "
        f"max floors {agg['max_floors']}"
    )
    click.echo(f"wrote {out}")


def _eval_remote(protocol, floors: int, reward_mode: str, port: int):
    """Host the manifest and wait for a remote agent to drain it."""
    import uvicorn

    from towerforge.service.app import RemoteEval, create_app

    manifest = RemoteEval(protocol, max_floor=floors, reward_mode=reward_mode)
    app = create_app(remote_eval=manifest)
    port = _effective_port(port)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    click.echo(f"waiting for a remote agent on ws://127.0.0.1:{port}/v1/ws")
    try:
        while not manifest.complete:
            time.sleep(0.2)
    finally:
        server.should_exit = True
        thread.join(timeout=5)
    return manifest.report()


@main.command()
@click.option("--seed", type=int, default=0, show_default=True, help="Bench seed.")
@click.option("--steps", type=int, default=500, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write rows as JSON.")
def bench(seed, steps, out):
    """Measure stepping throughput per floor band."""
    rows = measure_throughput(bench_seed=seed, steps=steps)
    click.echo(f"{'floor':>5}  {'mean ms':>9}  {'steps/sec':>10}")
    for row in rows:
        click.echo(f"{row.floor:>5}  {row.mean_ms:>9.4f}  {row.steps_per_second:>10.1f}")
    if out:
        with open(out, "w") as fh:
            fh.write(canonical_dumps([row.to_json() for row in rows]) + "\n")
        click.echo(f"wrote {out}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=DEFAULT_PORT, show_default=True)
@click.option("--capacity", type=int, default=50, show_default=True,
              help="Maximum live sessions.")
def serve(host, port, capacity):
    """Host the session service over HTTP and WebSocket."""
    import uvicorn

    from towerforge.service.app import create_app

    port = _effective_port(port)
    click.echo(f"serving on http://{host}:{port} (ws at /v1/ws), capacity {capacity}")
    uvicorn.run(create_app(capacity=capacity), host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
