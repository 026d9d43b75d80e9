"""Command-line entry points.

Subcommands: train, target, rollout, eval, serve. Every flag can also come
from an environment variable with prefix NODEPLAN_ (e.g.
NODEPLAN_TRAIN_EPOCHS=200 nodeplan train ...).

Exit codes: 0 success, 2 input error, 3 numeric failure, 4 output write
error, 5 network error.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .core import DataError, load_demo_json
from .evaluate import evaluate_model, parse_split, plot_overlays
from .integrate import IntegrationError
from .node import MlpField, TrainConfig, TrainingError, generate_target_array, train
from .planner import PlanningInfeasible
from .sim import load_scenario, run

EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_OUTPUT = 4
EXIT_NETWORK = 5


def _fail(code: int, msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError as exc:
        raise DataError(f"expected a comma-separated vector, got {text!r}") from exc


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(v) for v in text.split(",") if v.strip() != "")
    except ValueError as exc:
        raise DataError(f"expected comma-separated layer sizes, got {text!r}") from exc
    if not sizes or any(s < 1 for s in sizes):
        raise DataError("hidden layer sizes must be positive integers")
    return sizes


@click.group()
def cli() -> None:
    """Learn vector fields from demonstrations and track them safely."""


@cli.command("train")
@click.option("--data", required=True, type=click.Path(), help="demo JSON file")
@click.option("--out", required=True, type=click.Path(), help="model checkpoint path")
@click.option("--report", type=click.Path(), default=None, help="training report JSON")
@click.option("--epochs", default=500, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--hidden", default="64,64", show_default=True)
@click.option("--activation", default="tanh", show_default=True,
              type=click.Choice(["tanh", "softplus"]))
@click.option("--optimizer", default="adam", show_default=True,
              type=click.Choice(["adam", "sgd"]))
@click.option("--window-len", default=20, show_default=True)
@click.option("--window-stride", default=10, show_default=True)
@click.option("--train-step", default=0.0, show_default=True,
              help="RK4 substep (<=0: one step per data interval)")
@click.option("--seed", default=0, show_default=True)
def cmd_train(data, out, report, epochs, lr, hidden, activation, optimizer,
              window_len, window_stride, train_step, seed) -> None:
    """Fit a vector field to a demonstration set."""
    try:
        ds = load_demo_json(data)
        cfg = TrainConfig(epochs=epochs, learning_rate=lr,
                          hidden=_parse_hidden(hidden), activation=activation,
                          optimizer=optimizer, window_len=window_len,
                          window_stride=window_stride, train_step=train_step,
                          seed=seed)
    except (DataError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        model, rep = train(ds, cfg)
    except (TrainingError, IntegrationError) as exc:
        _fail(EXIT_NUMERIC, str(exc))
    try:
        model.save(out)
        if report:
            rep_obj = {"config": {"data": str(data), "epochs": epochs,
                                  "lr": lr, "hidden": hidden,
                                  "activation": activation,
                                  "optimizer": optimizer,
                                  "window_len": window_len,
                                  "window_stride": window_stride,
                                  "train_step": train_step, "seed": seed},
                       **rep.to_dict()}
            Path(report).write_text(json.dumps(rep_obj, indent=2))
    except OSError as exc:
        _fail(EXIT_OUTPUT, str(exc))
    click.echo(f"trained {len(ds)} demos for {epochs} epochs: "
               f"final loss {rep.final_loss:.6g} ({rep.wall_time:.1f}s) -> {out}")


@cli.command("target")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--x0", default=None, help="start point (default: training start)")
@click.option("--span", default=10.0, show_default=True)
@click.option("--dt", default=1e-3, show_default=True)
@click.option("--closure-rtol", default=0.05, show_default=True,
              help="periodicity closure tolerance, fraction of diameter")
def cmd_target(model_path, out, x0, span, dt, closure_rtol) -> None:
    """Integrate a trained field into a target array."""
    try:
        model = MlpField.load(model_path)
        if x0 is not None:
            start = _parse_vector(x0)
        elif model.meta.get("train_x0") is not None:
            start = np.asarray(model.meta["train_x0"], float)
        else:
            raise DataError("no --x0 given and checkpoint stores no training start")
    except (DataError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        ta = generate_target_array(model, start, span=span, dt=dt,
                                   closure_rtol=closure_rtol)
    except (DataError, IntegrationError) as exc:
        _fail(EXIT_NUMERIC, str(exc))
    try:
        Path(out).write_text(json.dumps({
            "config": {"model": str(model_path), "x0": start.tolist(),
                       "span": span, "dt": dt, "closure_rtol": closure_rtol},
            "points": ta.points.tolist(), "velocities": ta.velocities.tolist(),
            "dt": ta.dt, "periodic": ta.periodic}))
    except OSError as exc:
        _fail(EXIT_OUTPUT, str(exc))
    click.echo(f"target array: {len(ta)} points, dt={ta.dt}, "
               f"periodic={ta.periodic} -> {out}")


@cli.command("rollout")
@click.option("--scenario", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="rollout CSV path")
@click.option("--summary", type=click.Path(), default=None,
              help="summary JSON path (default: <out>.summary.json)")
def cmd_rollout(scenario, out, summary) -> None:
    """Simulate a scenario and log the closed-loop run."""
    try:
        sc = load_scenario(scenario)
    except (DataError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        log = run(sc)
    except (IntegrationError, PlanningInfeasible, FloatingPointError) as exc:
        _fail(EXIT_NUMERIC, str(exc))
    try:
        log.to_csv(out)
        log.save_summary(summary or f"{out}.summary.json")
    except OSError as exc:
        _fail(EXIT_OUTPUT, str(exc))
    s = log.summary()
    click.echo(f"rollout {s['steps']} steps: final error "
               f"{s['final_tracking_error']:.4g}, min barrier "
               f"{s['min_barrier']}, mean |u| {s['mean_u_norm']:.4g} -> {out}")


@cli.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path())
@click.option("--split", required=True,
              help="train:test indices, e.g. '0,1,2,3:4,5,6'")
@click.option("--out", required=True, type=click.Path())
@click.option("--svg", type=click.Path(), default=None,
              help="optional demo-vs-reproduction overlay plot")
def cmd_eval(model_path, data, split, out, svg) -> None:
    """Score reproductions of a demo set with DTW."""
    try:
        model = MlpField.load(model_path)
        ds = load_demo_json(data)
        split_idx = parse_split(split, len(ds))
    except (DataError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        report = evaluate_model(model, ds, split_idx)
    except IntegrationError as exc:
        _fail(EXIT_NUMERIC, str(exc))
    try:
        out_obj = {"config": {"model": str(model_path), "data": str(data),
                              "split": split}, **report.to_dict()}
        Path(out).write_text(json.dumps(out_obj))
        if svg:
            plot_overlays(ds, report, svg)
    except OSError as exc:
        _fail(EXIT_OUTPUT, str(exc))
    tr_part = report.train or {"mean_dtw": None, "count": 0}
    te_part = report.test
    te_txt = (f"test mean DTW {te_part['mean_dtw']:.4g} (n={te_part['count']})"
              if te_part else "test: absent")
    click.echo(f"eval: train mean DTW "
               f"{tr_part['mean_dtw'] if tr_part['count'] else None} "
               f"(n={tr_part['count']}); {te_txt} -> {out}")


@cli.command("serve")
@click.option("--scenario", required=True, type=click.Path())
@click.option("--port", default=8732, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui-dir", type=click.Path(), default=None,
              help="static UI bundle to serve at / (default: bundled frontend if present)")
def cmd_serve(scenario, port, host, ui_dir) -> None:
    """Run the interactive playground server."""
    from .server import PlaygroundServer  # lazy: keeps core import light

    try:
        sc = load_scenario(scenario)
    except (DataError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    srv = PlaygroundServer(sc, host=host, port=port, ui_dir=ui_dir)
    try:
        srv.start()
    except OSError as exc:
        _fail(EXIT_NETWORK, f"cannot bind {host}:{port}: {exc}")
    click.echo(f"playground on http://{host}:{srv.port} (ws at /ws); ctrl-c to stop")
    try:
        srv.join()
    except KeyboardInterrupt:
        click.echo("shutting down")
    finally:
        srv.stop()


def main() -> None:
    cli(auto_envvar_prefix="NODEPLAN")


if __name__ == "__main__":
    main()
