"""Command-line front end.

Every command resolves its settings from built-in defaults, then the
command's section of an optional JSON config file, then explicit flags.
Artifacts go to ``<out-dir>/<timestamp>-<hash>/`` next to a
``manifest.json`` that echoes the resolved settings.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import platform
import sys
from dataclasses import fields
from pathlib import Path

import click
import numpy as np

from . import __version__, experiments, fidelity, kernels, povm, reconstruct, states
from .density import write_bar_csv, write_export
from .errors import AqtError, CapacityError, NumericError, ValidationError
from .model import TransformerConfig, init_model, load_checkpoint, save_checkpoint
from .train import TrainOptions
from .train import train as fit_model

TRAIN_KEYS = tuple(
    f.name for f in fields(TrainOptions) if f.name not in ("seed",)
)

DEFAULTS = {
    "sample": {"state": None, "n": None, "seed": 0, "out": None},
    "train": {"dataset": None, "seed": 0, "n_layers": 2, "embed_dim": 64, "n_heads": 4, "ff_dim": None,
              "full_size": False, **{k: getattr(TrainOptions(), k) for k in TRAIN_KEYS}},
    "eval": {"checkpoint": None, "state": None, "which": "fc-sampled", "n_samples": 100_000, "seed": 0,
             "projection": "closest"},
    "reconstruct": {"checkpoint": None, "dataset": None, "method": "aqt", "projection": "closest",
                    "state": None, "max_iters": 5000, "tol": 1e-10},
    "sweep-scaling": {"qubits": [4, 6, 8, 10], "ladder": [100, 200, 500, 1000, 2000, 5000, 10000],
                      "seeds": [0], "threshold": 0.99, "fc_samples": 10_000, "n_layers": 2, "embed_dim": 64,
                      "n_heads": 4, "ff_dim": None, "full_size": False,
                      **{k: getattr(TrainOptions(), k) for k in TRAIN_KEYS}},
    "sweep-error": {"p": [0.0, 0.1, 0.2, 0.3], "n": 60_000, "seeds": [0], "projection": "closest",
                    "n_layers": 2, "embed_dim": 64, "n_heads": 4, "ff_dim": None, "full_size": False,
                    **{k: getattr(TrainOptions(), k) for k in TRAIN_KEYS}},
}


# ------------------------------------------------------------- plumbing


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object keyed by command name")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise ValidationError(f"{path}: unknown sections {unknown}; expected some of {sorted(DEFAULTS)}")
    return doc


def resolve(ctx: click.Context, command: str, flags: dict) -> dict:
    """Defaults, then the config-file section, then flags the user actually passed."""
    resolved = dict(DEFAULTS[command])
    section = ctx.obj["config"].get(command, {})
    unknown = sorted(set(section) - set(resolved))
    if unknown:
        raise ValidationError(f"config section {command!r} has unknown fields {unknown}")
    resolved.update(section)
    for key, value in flags.items():
        source = ctx.get_parameter_source(key)
        if source is not None and source.name != "DEFAULT":
            resolved[key] = value
        elif key not in resolved:
            resolved[key] = value
    return resolved


def _jsonable(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def open_run(ctx: click.Context, command: str, config: dict) -> Path:
    """Create ``<out-dir>/<UTC timestamp>-<config hash>`` and write its manifest."""
    blob = json.dumps({"command": command, "config": config}, sort_keys=True, default=_jsonable)
    digest = hashlib.sha256(blob.encode()).hexdigest()[:10]
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = Path(ctx.obj["out_dir"])
    run_dir = base / f"{stamp}-{digest}"
    suffix = 1
    while run_dir.exists():
        run_dir = base / f"{stamp}-{digest}-{suffix}"
        suffix += 1
    run_dir.mkdir(parents=True)
    manifest = {
        "command": command,
        "config": config,
        "config_hash": digest,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "rng": povm.RNG_NAME,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_utc": stamp,
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8"
    )
    ctx.obj["run_dir"] = run_dir
    return run_dir


def model_config(cfg: dict, n_qubits: int, seed: int) -> TransformerConfig:
    if cfg["full_size"]:
        base = TransformerConfig.full_size(n_qubits)
        return TransformerConfig(n_qubits, base.n_layers, base.embed_dim, cfg["n_heads"], cfg["ff_dim"], seed)
    return TransformerConfig(n_qubits, cfg["n_layers"], cfg["embed_dim"], cfg["n_heads"], cfg["ff_dim"], seed)


def train_options(cfg: dict, seed: int) -> TrainOptions:
    return TrainOptions(seed=seed, **{k: cfg[k] for k in TRAIN_KEYS})


def _int_list(text):
    if text is None or isinstance(text, list):
        return text
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text):
    if text is None or isinstance(text, list):
        return text
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from exc


def model_train_flags(fn):
    opts = [
        click.option("--layers", "n_layers", type=click.IntRange(min=1), default=2, show_default=True),
        click.option("--embed-dim", type=click.IntRange(min=1), default=64, show_default=True),
        click.option("--heads", "n_heads", type=click.IntRange(min=1), default=4, show_default=True),
        click.option("--ff-dim", type=click.IntRange(min=1), default=None, help="Feed-forward width [4 x embed-dim]."),
        click.option("--full-size", is_flag=True, help="Use 6 layers with 256-dimensional embeddings."),
        click.option("--lr", "learning_rate", type=click.FloatRange(min=0, min_open=True), default=1e-3,
                     show_default=True),
        click.option("--batch-size", type=click.IntRange(min=1), default=128, show_default=True),
        click.option("--epochs", type=click.IntRange(min=1), default=100, show_default=True),
        click.option("--patience", type=click.IntRange(min=0), default=10, show_default=True,
                     help="Epochs without held-out improvement before stopping; 0 disables."),
        click.option("--heldout-fraction", type=click.FloatRange(0, 1, max_open=True), default=0.1,
                     show_default=True),
        click.option("--lr-decay", type=click.FloatRange(0, 1, min_open=True), default=1.0, show_default=True,
                     help="Learning-rate factor applied on held-out plateaus; 1 keeps it fixed."),
        click.option("--decay-patience", type=click.IntRange(min=1), default=2, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _state(spec: str) -> states.ProductOperatorEnsemble:
    if spec is None:
        raise ValidationError("a state spec (ghz:N or faulty:p) is required")
    return states.parse_state_spec(spec)


# ------------------------------------------------------------- commands


@click.group()
@click.option("--out-dir", type=click.Path(file_okay=False), default="runs", show_default=True,
              help="Parent directory for per-run output directories.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file with one object per command name.")
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
@click.version_option(__version__, prog_name="aqt")
@click.pass_context
def cli(ctx, out_dir, config_path, verbose):
    """Attention-based quantum state tomography on simulated Pauli-4 data."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["out_dir"] = out_dir
    ctx.obj["config"] = _load_config(config_path)


@cli.command()
@click.option("--state", help="ghz:N or faulty:p")
@click.option("--n", type=click.IntRange(min=1), help="Number of measurement outcomes.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="Dataset path [run directory/dataset.txt].")
@click.pass_context
def sample(ctx, **flags):
    """Simulate Pauli-4 measurement outcomes of a state."""
    cfg = resolve(ctx, "sample", flags)
    if cfg["n"] is None or cfg["n"] < 1:
        raise ValidationError("--n must be a positive sample count")
    state = _state(cfg["state"])
    frame = povm.pauli4_frame()
    ds = povm.sample(state, frame, cfg["n"], cfg["seed"])
    run_dir = open_run(ctx, "sample", cfg)
    path = Path(cfg["out"]) if cfg["out"] else run_dir / "dataset.txt"
    povm.write_dataset(ds, path)
    click.echo(f"wrote {len(ds)} outcomes of {state.label} to {path}")
    if state.n_qubits <= 6:
        outs = povm.all_outcomes(state.n_qubits)
        p = povm.outcome_probs(state, frame, outs)
        freq = ds.frequencies()
        top = np.argsort(-p, kind="stable")[:5]
        click.echo("outcome  exact_p  empirical")
        for i in top:
            label = "".join(map(str, outs[i]))
            click.echo(f"{label:>7}  {p[i]:.5f}  {freq[i]:.5f}")
        click.echo(f"total variation to exact: {0.5 * np.abs(p - freq).sum():.5f}")


@cli.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--seed", type=int, default=0, show_default=True)
@model_train_flags
@click.pass_context
def train(ctx, **flags):
    """Fit the autoregressive model to a dataset file."""
    cfg = resolve(ctx, "train", flags)
    if cfg["dataset"] is None:
        raise ValidationError("a dataset path is required")
    ds = povm.read_dataset(cfg["dataset"])
    mcfg = model_config(cfg, ds.n_qubits, cfg["seed"])
    opts = train_options(cfg, cfg["seed"])
    run_dir = open_run(ctx, "train", cfg)
    try:
        res = fit_model(init_model(mcfg), ds, opts)
    except NumericError as exc:
        if exc.checkpoint is not None:
            save_checkpoint(exc.checkpoint, run_dir / "last_good.ckpt", opts.as_dict(), {"dataset": str(cfg["dataset"])})
            click.echo(f"saved last good model to {run_dir / 'last_good.ckpt'}", err=True)
        raise
    provenance = {"dataset": str(cfg["dataset"]), "dataset_seed": ds.seed, "dataset_source": ds.source,
                  "n_samples": len(ds), "best_epoch": res.best_epoch}
    save_checkpoint(res.model, run_dir / "model.ckpt", opts.as_dict(), provenance)
    with open(run_dir / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,train_nll,heldout_nll\n")
        for r in res.trace:
            fh.write(f"{r.epoch},{r.train_nll!r},{r.heldout_nll!r}\n")
    last = res.trace[-1]
    click.echo(
        f"trained {len(res.trace)} epochs (best {res.best_epoch}); "
        f"final train NLL {last.train_nll:.5f}, held-out {last.heldout_nll:.5f}"
    )
    click.echo(f"checkpoint: {run_dir / 'model.ckpt'}")


@cli.command(name="eval")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--state", help="Reference state, ghz:N or faulty:p.")
@click.option("--which", type=click.Choice(["fc-sampled", "fc-exact", "fq"]), default="fc-sampled",
              show_default=True)
@click.option("--n-samples", type=click.IntRange(min=2), default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--projection", type=click.Choice(["closest", "clip"]), default="closest", show_default=True)
@click.pass_context
def eval_cmd(ctx, **flags):
    """Score a checkpoint against a reference state."""
    cfg = resolve(ctx, "eval", flags)
    if cfg["checkpoint"] is None:
        raise ValidationError("a checkpoint path is required")
    model, _ = load_checkpoint(cfg["checkpoint"])
    state = _state(cfg["state"])
    if state.n_qubits != model.config.max_len:
        raise ValidationError(f"state has {state.n_qubits} qubits, checkpoint has {model.config.max_len}")
    frame = povm.pauli4_frame()
    if cfg["which"] == "fq" and state.n_qubits > reconstruct.MAX_MODEL_QUBITS:
        raise CapacityError(
            f"fq reconstructs a dense density matrix; capped at {reconstruct.MAX_MODEL_QUBITS} qubits, "
            f"checkpoint has {state.n_qubits}"
        )
    run_dir = open_run(ctx, "eval", cfg)
    report = {"which": cfg["which"], "state": state.label}
    if cfg["which"] == "fc-sampled":
        est = experiments.classical_fidelity(state, model, frame, cfg["n_samples"], cfg["seed"])
        report.update(value=est.value, std_error=est.std_error, n_samples=est.n_samples)
        click.echo(f"F_C = {est}")
    elif cfg["which"] == "fc-exact":
        est = fidelity.classical_fidelity_exact(povm.state_evaluator(state, frame), model, state.n_qubits)
        report.update(value=est.value, std_error=0.0)
        click.echo(f"F_C = {est}")
    else:
        rec = experiments.reconstruct_model(model, frame, cfg["projection"])
        fq = fidelity.quantum_fidelity(states.to_dense(state), rec.projected)
        write_export(rec.projected, run_dir / "density.json")
        write_export(rec.raw, run_dir / "density_raw.json")
        report.update(value=fq, projection_distance=rec.projection_distance)
        click.echo(f"F_Q = {fq:.6f} (projection distance {rec.projection_distance:.3g})")
        click.echo(f"density matrix: {run_dir / 'density.json'}")
    (run_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@cli.command(name="reconstruct")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["aqt", "linear", "mle"]), default="aqt", show_default=True)
@click.option("--projection", type=click.Choice(["closest", "clip"]), default="closest", show_default=True)
@click.option("--state", help="Optional reference state for an F_Q report.")
@click.option("--max-iters", type=click.IntRange(min=1), default=5000, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.pass_context
def reconstruct_cmd(ctx, **flags):
    """Write a density matrix and a bar-plot CSV of its absolute values."""
    cfg = resolve(ctx, "reconstruct", flags)
    frame = povm.pauli4_frame()
    if cfg["method"] == "aqt":
        if cfg["checkpoint"] is None:
            raise ValidationError("method aqt needs --checkpoint")
        model, _ = load_checkpoint(cfg["checkpoint"])
        rec = experiments.reconstruct_model(model, frame, cfg["projection"])
        raw, dm = rec.raw, rec.projected
    else:
        if cfg["dataset"] is None:
            raise ValidationError(f"method {cfg['method']} needs --dataset")
        ds = povm.read_dataset(cfg["dataset"])
        if cfg["method"] == "linear":
            raw = reconstruct.linear_inversion(ds, frame)
            dm, _ = fidelity.project_to_psd(raw, method=cfg["projection"])
        else:
            raw = None
            res = reconstruct.mle_reconstruct(ds, frame, cfg["max_iters"], cfg["tol"])
            dm = res.density
            if not res.converged:
                click.echo("warning: MLE did not converge; returning the last iterate", err=True)
    run_dir = open_run(ctx, "reconstruct", cfg)
    write_export(dm, run_dir / "density.json")
    if raw is not None:
        write_export(raw, run_dir / "density_raw.json")
    write_bar_csv(dm, run_dir / "bars.csv")
    off = 1.0 - dm.corner_mass()
    report = {"method": cfg["method"], "n_qubits": dm.n_qubits, "off_corner_mass": off,
              "projection_distance": dm.projection_distance}
    click.echo(f"{cfg['method']} reconstruction of {dm.n_qubits} qubits; off-corner mass {off:.4f}")
    if dm.projection_distance:
        click.echo(f"projection distance {dm.projection_distance:.4g}")
    if cfg["state"]:
        state = _state(cfg["state"])
        fq = fidelity.quantum_fidelity(states.to_dense(state), dm)
        report["fq"] = fq
        click.echo(f"F_Q vs {state.label} = {fq:.6f}")
    (run_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"density matrix: {run_dir / 'density.json'}")


@cli.command(name="sweep-scaling")
@click.option("--qubits", callback=lambda c, p, v: _int_list(v), help="Comma-separated qubit counts [4,6,8,10].")
@click.option("--ladder", callback=lambda c, p, v: _int_list(v), help="Increasing comma-separated sample sizes.")
@click.option("--seeds", callback=lambda c, p, v: _int_list(v), help="Comma-separated seeds [0].")
@click.option("--threshold", type=click.FloatRange(0, 1), default=0.99, show_default=True)
@click.option("--fc-samples", type=click.IntRange(min=2), default=10_000, show_default=True)
@model_train_flags
@click.pass_context
def sweep_scaling_cmd(ctx, **flags):
    """Smallest training-set size reaching a classical-fidelity threshold, per qubit count."""
    cfg = resolve(ctx, "sweep-scaling", flags)
    for key in ("qubits", "ladder", "seeds"):
        if not cfg[key]:
            cfg[key] = DEFAULTS["sweep-scaling"][key]
    cfg["ladder"] = experiments.check_ladder(cfg["ladder"])
    run_dir = open_run(ctx, "sweep-scaling", cfg)
    res = experiments.sweep_scaling(
        cfg["qubits"], cfg["ladder"], cfg["seeds"], cfg["threshold"],
        model_config(cfg, 2, 0), train_options(cfg, 0), cfg["fc_samples"],
    )
    (run_dir / "scaling.csv").write_text(res.to_csv(), encoding="utf-8")
    (run_dir / "n_star.csv").write_text(res.n_star_csv(), encoding="utf-8")
    (run_dir / "timing.csv").write_text(res.timing_csv(), encoding="utf-8")
    for n, v in sorted(res.n_star.items()):
        click.echo(f"N_q={n}: N_s* = {'unresolved' if v is None else v}")
    click.echo(f"results: {run_dir / 'scaling.csv'}")


@cli.command(name="sweep-error")
@click.option("--p", callback=lambda c, p, v: _float_list(v), help="Comma-separated error rates [0,0.1,0.2,0.3].")
@click.option("--n", type=click.IntRange(min=2), default=60_000, show_default=True)
@click.option("--seeds", callback=lambda c, p, v: _int_list(v), help="Comma-separated seeds [0].")
@click.option("--projection", type=click.Choice(["closest", "clip"]), default="closest", show_default=True)
@model_train_flags
@click.pass_context
def sweep_error_cmd(ctx, **flags):
    """Read the faulty-qubit error rate back from reconstructed states."""
    cfg = resolve(ctx, "sweep-error", flags)
    for key in ("p", "seeds"):
        if not cfg[key]:
            cfg[key] = DEFAULTS["sweep-error"][key]
    experiments.check_rates(cfg["p"])
    run_dir = open_run(ctx, "sweep-error", cfg)
    rows = experiments.sweep_error(
        cfg["p"], cfg["n"], cfg["seeds"], model_config(cfg, 3, 0), train_options(cfg, 0), cfg["projection"]
    )
    (run_dir / "error.csv").write_text(experiments.error_csv(rows), encoding="utf-8")
    for r in rows:
        click.echo(f"p={r.p:g} seed={r.seed}: F_Q(ghz)={r.fq_ghz:.4f} |dev|={r.deviation:.4f} "
                   f"F_Q(err)={r.fq_err:.4f}")
    click.echo(f"results: {run_dir / 'error.csv'}")


def main(argv=None) -> int:
    """Console entry point mapping library errors to exit codes."""
    try:
        cli.main(args=argv, prog_name="aqt", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except AqtError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
