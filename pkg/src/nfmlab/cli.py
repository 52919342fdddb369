"""Command-line frontend: drives experiments locally or through a service.

Every experiment command accepts --config FILE plus one override flag
per config key; unset flags fall through to the file and then to the
defaults.  With --server URL the resolved config is posted to a running
service (see `nfmlab serve`) and the command polls until the job lands,
so heavy runs can live elsewhere.

NFMLAB_THREADS caps the compute thread count; everything else comes in
through flags or the config file.
"""

from __future__ import annotations

import json
import time
from dataclasses import fields

import click

from . import drivers
from .metrics import read_metrics
from .runconfig import RunConfig, build_config

_KINDS = {"str": str, "int": int, "float": float, "bool": bool}


def config_options(fn):
    """One override flag per config key, all defaulting to unset."""
    for f in reversed(fields(RunConfig)):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            fn = click.option(f"{flag}/--no-{flag[2:]}", default=None)(fn)
        else:
            fn = click.option(flag, type=_KINDS[f.type], default=None)(fn)
    return fn


def common_options(fn):
    fn = click.option("--server", default=None, metavar="URL",
                      help="submit to a running service instead of "
                           "computing locally")(fn)
    fn = click.option("--config", "config_file", default=None,
                      type=click.Path(exists=True, dir_okay=False),
                      help="key = value manifest; flags override it")(fn)
    return config_options(fn)


def _build(config_file, overrides) -> RunConfig:
    try:
        return build_config(config_file, **overrides)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def _remote(server: str, kind: str, cfg: RunConfig, **extra) -> dict | None:
    """Submit a job and poll it to completion; returns the result summary."""
    import httpx

    payload = {"kind": kind,
               "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)}}
    payload.update(extra)
    with httpx.Client(base_url=server, timeout=60.0) as client:
        job = client.post("/jobs", json=payload).raise_for_status().json()
        while job["state"] in ("queued", "running"):
            time.sleep(0.5)
            job = client.get(f"/jobs/{job['id']}").raise_for_status().json()
    if job["state"] == "error":
        raise click.ClickException(f"server job failed:\n{job['detail']}")
    return job["result"]


@click.group()
def main():
    """Flow-map fluid simulation lab.

    Set NFMLAB_THREADS to cap the compute thread count.
    """


@main.command()
@common_options
def run(config_file, server, **overrides):
    """Advance a scene and record per-step metrics."""
    cfg = _build(config_file, overrides)
    if server:
        click.echo(json.dumps(_remote(server, "run", cfg), indent=2))
        return
    res = drivers.run(cfg)
    last = read_metrics(res.metrics_path)[-1]
    click.echo(f"wrote {res.metrics_path}")
    click.echo(f"step {last.step}  t {last.time:.6g}  "
               f"ke {last.kinetic_energy:.6g}  max|u| {last.max_speed:.6g}")


@main.command()
@common_options
def fit(config_file, server, **overrides):
    """Stream frames through the training loop, one session per frame."""
    cfg = _build(config_file, overrides)
    if server:
        click.echo(json.dumps(_remote(server, "fit", cfg), indent=2))
        return
    res = drivers.fit(cfg)
    click.echo(f"wrote {res.metrics_path}")
    for i, s in enumerate(res.sessions, start=1):
        click.echo(f"session {i:3d}  rmse {s.rmse:.6e}  aepe {s.aepe:.6e}  "
                   f"iters {s.iters}")


@main.command()
@common_options
def diagnose(config_file, server, **overrides):
    """Compare map-marching quality against the incremental baseline."""
    cfg = _build(config_file, overrides)
    if server:
        click.echo(json.dumps(_remote(server, "diagnose", cfg), indent=2))
        return
    res = drivers.diagnose(cfg)
    click.echo(f"wrote {res.csv_path}")
    click.echo(f"roundtrip  bidirectional {res.bidir_roundtrip:.6e}  "
               f"incremental {res.sl_roundtrip:.6e}")
    click.echo(f"jacobian   bidirectional {res.bidir_jacobian:.6e}  "
               f"incremental {res.sl_jacobian:.6e}")


@main.command()
@click.option("--methods", default="nfm,mcr,bfecc,sl", show_default=True,
              help="comma-separated method list")
@common_options
def compare(methods, config_file, server, **overrides):
    """Run several methods on one scene and join their metrics."""
    cfg = _build(config_file, overrides)
    picks = [m.strip() for m in methods.split(",") if m.strip()]
    if server:
        result = _remote(server, "compare", cfg, methods=picks)
        click.echo(json.dumps(result, indent=2))
        return
    click.echo(f"wrote {drivers.compare(cfg, methods=picks)}")


@main.command("sweep-n")
@click.option("--n-values", required=True,
              help="comma-separated reinitialization periods")
@common_options
def sweep_n(n_values, config_file, server, **overrides):
    """Sweep the reinitialization period and tabulate final errors."""
    cfg = _build(config_file, overrides)
    try:
        picks = [int(v) for v in n_values.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"bad n list {n_values!r}", param_hint="--n-values")
    if not picks:
        raise click.BadParameter("empty n list", param_hint="--n-values")
    if server:
        result = _remote(server, "sweep_n", cfg, n_values=picks)
        click.echo(json.dumps(result, indent=2))
        return
    res = drivers.sweep_n(cfg, picks)
    click.echo(f"wrote {res.csv_path}")
    for row in res.rows:
        click.echo(f"n {row[0]:3d}  mean_abs {row[1]:.6e}  rmse {row[2]:.6e}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Serve the experiment API over HTTP."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
