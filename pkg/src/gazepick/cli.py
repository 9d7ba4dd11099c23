"""Command line entry points: serve the realtime gateway, replay traces, and
synthesize dwell traces for testing."""

from __future__ import annotations

import os
import sys

import click

from gazepick.config import config_from_options
from gazepick.errors import GazepickError
from gazepick.orchestrator import generate_trace, replay, report_bytes, write_trace
from gazepick.simworld import load_scene


@click.group()
def main():
    """Gaze-driven object selection and pick-and-place engine."""


def _scene_option(f):
    return click.option(
        "--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False),
        help="Scene config JSON.",
    )(f)


@main.command()
@_scene_option
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--mode", type=click.Choice(["auto", "confirm"]), default="auto", show_default=True)
@click.option(
    "--policy", type=click.Choice(["strict", "confidence"]), default="strict", show_default=True
)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--sigma-px", default=0.0, show_default=True, type=float)
@click.option("--min-conf", default=0.5, show_default=True, type=float)
@click.option("--detector-url", default=None, help="External detection service base URL.")
@click.option("--ui-dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="Serve a built UI bundle at /.")
def serve(scene_path, port, host, mode, policy, seed, sigma_px, min_conf, detector_url, ui_dir):
    """Run the WebSocket gateway. GAZE_ENGINE_PORT overrides --port."""
    from gazepick.gateway import serve as run_serve

    env_port = os.environ.get("GAZE_ENGINE_PORT")
    if env_port:
        try:
            port = int(env_port)
        except ValueError:
            raise click.ClickException(f"GAZE_ENGINE_PORT is not an integer: {env_port!r}")
    try:
        scene = load_scene(scene_path)
        config = config_from_options(
            mode=mode, policy=policy, seed=seed, sigma_px=sigma_px,
            min_conf=min_conf, detector_url=detector_url,
        )
        run_serve(scene, config, host=host, port=port, ui_dir=ui_dir)
    except GazepickError as exc:
        raise click.ClickException(str(exc))


@main.command("replay")
@_scene_option
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--mode", type=click.Choice(["auto", "confirm"]), default="auto", show_default=True)
@click.option(
    "--policy", type=click.Choice(["strict", "confidence"]), default="strict", show_default=True
)
@click.option("--sigma-px", default=0.0, show_default=True, type=float)
@click.option("--min-conf", default=0.5, show_default=True, type=float)
def replay_cmd(scene_path, trace_path, report_path, seed, mode, policy, sigma_px, min_conf):
    """Replay a trace against a scene and write the report JSON."""
    try:
        scene = load_scene(scene_path)
        config = config_from_options(
            mode=mode, policy=policy, seed=seed, sigma_px=sigma_px, min_conf=min_conf
        )
        report = replay(trace_path, scene, config)
    except GazepickError as exc:
        raise click.ClickException(str(exc))
    with open(report_path, "wb") as fh:
        fh.write(report_bytes(report))
    agg = report["aggregate"]
    click.echo(
        f"replayed {agg['trials']} trial(s): {agg['matched']} matched, "
        f"{agg['grasps_done']} grasp(s) done -> {report_path}"
    )


@main.command("gen-trace")
@_scene_option
@click.option("--target", required=True, help="Object label to dwell on.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["auto", "confirm"]), default="auto", show_default=True)
@click.option("--dwell-ms", default=2000, show_default=True, type=int)
@click.option("--rate-hz", default=50, show_default=True, type=int)
@click.option("--jitter-m", default=0.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
def gen_trace(scene_path, target, out_path, mode, dwell_ms, rate_hz, jitter_m, seed):
    """Synthesize a dwell trace over a labeled object."""
    try:
        scene = load_scene(scene_path)
        entries = generate_trace(
            scene, target, dwell_ms=dwell_ms, rate_hz=rate_hz,
            confirm=(mode == "confirm"), jitter_m=jitter_m, seed=seed,
        )
    except GazepickError as exc:
        raise click.ClickException(str(exc))
    write_trace(entries, out_path)
    click.echo(f"wrote {len(entries)} record(s) -> {out_path}")


if __name__ == "__main__":
    sys.exit(main())
