"""Experiment harness: validated run configs, seeded deterministic runs,
metrics CSVs with a frozen schema, run manifests, and cross-optimizer
comparison tables.

All randomness flows from the config seeds through numpy SeedSequences;
with `record_walltime` off (the default) rerunning a config produces
byte-identical CSVs.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import MetricsRecord, Snapshot, summarize_gradients
from .errors import ConfigError, InvalidInput
from .kron_fisher import kpq as kpq_of
from .kron_fisher import whiten
from .matops import norm
from .optimizers import (
    FismoState,
    adamw_init,
    fismo_init,
    muon_init,
    sgd_init,
    step,
)
from .polar import NewtonSchulzConfig, condition_number
from .problems import build_problem

CSV_HEADER = "step,loss,grad_nuclear,grad_frobenius,update_kappa,kpq,momentum_tracking,wall_ns"

_PROBLEM_KEYS = {
    "quadratic": {"m", "n", "seed"},
    "logistic": {"m", "n", "n_samples", "seed"},
    "mlp": {"layer_dims", "n_samples", "seed", "label_noise", "feature_scale_decades", "class_skew"},
}

_OPT_COMMON_KEYS = {"name", "label", "batch_size", "eta_schedule", "C",
                    "weight_decay", "fallback_lr"}
_OPT_KEYS = {
    "fismo": _OPT_COMMON_KEYS
    | {"eta", "beta", "mu", "gamma", "c_gamma", "polar_backend", "ns_iterations", "ns_variant"},
    "muon": _OPT_COMMON_KEYS | {"lr", "beta", "polar_backend", "ns_iterations", "ns_variant"},
    "adamw": _OPT_COMMON_KEYS | {"lr", "betas", "eps"},
    "sgd": _OPT_COMMON_KEYS | {"lr", "momentum"},
}

_TOP_KEYS = {"problem", "optimizer", "horizon", "seeds", "output_dir",
             "snapshot_every", "record_walltime"}


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment configuration."""

    problem: dict
    optimizer: dict
    horizon: int
    seeds: tuple
    output_dir: str
    snapshot_every: int = 0
    record_walltime: bool = False

    @property
    def label(self) -> str:
        return self.optimizer.get("label", self.optimizer["name"])


def validate_config(raw: dict) -> RunConfig:
    """Validate a raw config mapping; ConfigError messages carry field paths."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"{key}: unknown key")
    for key in ("problem", "optimizer", "horizon", "seeds", "output_dir"):
        if key not in raw:
            raise ConfigError(f"{key}: missing required key")

    problem = dict(raw["problem"])
    name = problem.get("name")
    if name not in _PROBLEM_KEYS:
        raise ConfigError(f"problem.name: unknown problem {name!r}")
    for key in problem:
        if key != "name" and key not in _PROBLEM_KEYS[name]:
            raise ConfigError(f"problem.{key}: unknown key for {name}")

    optimizer = dict(raw["optimizer"])
    opt_name = optimizer.get("name")
    if opt_name not in _OPT_KEYS:
        raise ConfigError(f"optimizer.name: unknown optimizer {opt_name!r}")
    for key in optimizer:
        if key not in _OPT_KEYS[opt_name]:
            raise ConfigError(f"optimizer.{key}: unknown key for {opt_name}")
    schedule = optimizer.get("eta_schedule", "constant")
    if schedule not in ("constant", "inv_sqrt"):
        raise ConfigError(f"optimizer.eta_schedule: unknown schedule {schedule!r}")
    batch = optimizer.get("batch_size", 0)
    if not isinstance(batch, int) or batch < 0:
        raise ConfigError("optimizer.batch_size: must be a nonnegative integer (0 = full batch)")

    horizon = raw["horizon"]
    if not isinstance(horizon, int) or horizon < 1:
        raise ConfigError("horizon: must be an integer >= 1")
    seeds = tuple(raw["seeds"])
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: must be nonempty and distinct")
    snapshot_every = raw.get("snapshot_every", 0)
    if not isinstance(snapshot_every, int) or snapshot_every < 0:
        raise ConfigError("snapshot_every: must be a nonnegative integer")

    return RunConfig(
        problem=problem,
        optimizer=optimizer,
        horizon=horizon,
        seeds=seeds,
        output_dir=str(raw["output_dir"]),
        snapshot_every=snapshot_every,
        record_walltime=bool(raw.get("record_walltime", False)),
    )


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate_config(raw)


# --------------------------------------------------------------- optimizers

def _ns_config(opt: dict) -> NewtonSchulzConfig:
    return NewtonSchulzConfig(
        iterations=opt.get("ns_iterations", 5),
        variant=opt.get("ns_variant", "quintic"),
    )


def _effective_eta(opt: dict, horizon: int) -> float:
    if opt.get("eta_schedule", "constant") == "inv_sqrt":
        return opt.get("C", 1.0) / math.sqrt(horizon)
    return opt.get("eta", opt.get("lr", 0.02))


def _make_states(opt: dict, params, horizon: int):
    """One optimizer state per parameter. Matrix parameters get the named
    optimizer; 1-D parameters fall back to element-wise AdamW (or the
    element-wise rule itself for adamw/sgd)."""
    name = opt["name"]
    eta = _effective_eta(opt, horizon)
    wd = opt.get("weight_decay", 0.0)
    fallback_lr = opt.get("fallback_lr", 1e-3)
    states = []
    for w in params:
        if w.ndim == 2:
            if name == "fismo":
                states.append(fismo_init(
                    w, eta=eta, beta=opt.get("beta", 0.95), mu=opt.get("mu", 0.01),
                    gamma=opt.get("gamma"), c_gamma=opt.get("c_gamma", 1.0),
                    polar_backend=opt.get("polar_backend", "newton_schulz"),
                    polar_cfg=_ns_config(opt), weight_decay=wd,
                ))
            elif name == "muon":
                states.append(muon_init(
                    w, lr=eta, beta=opt.get("beta", 0.95),
                    polar_backend=opt.get("polar_backend", "newton_schulz"),
                    polar_cfg=_ns_config(opt), weight_decay=wd,
                ))
            elif name == "adamw":
                states.append(adamw_init(
                    w, lr=eta, betas=tuple(opt.get("betas", (0.9, 0.999))),
                    eps=opt.get("eps", 1e-8), weight_decay=wd,
                ))
            else:
                states.append(sgd_init(w, lr=eta, momentum=opt.get("momentum", 0.9),
                                       weight_decay=wd))
        else:
            if name == "adamw":
                states.append(adamw_init(w, lr=eta, betas=tuple(opt.get("betas", (0.9, 0.999))),
                                         eps=opt.get("eps", 1e-8), weight_decay=wd))
            elif name == "sgd":
                states.append(sgd_init(w, lr=eta, momentum=opt.get("momentum", 0.9),
                                       weight_decay=wd))
            else:
                states.append(adamw_init(w, lr=fallback_lr))
    return states


# --------------------------------------------------------------------- runs

def _format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    v = float(x)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _record_to_line(r: MetricsRecord) -> str:
    return ",".join([
        str(r.step), _format_value(r.loss), _format_value(r.grad_nuclear),
        _format_value(r.grad_frobenius), _format_value(r.update_kappa),
        _format_value(r.kpq), _format_value(r.momentum_tracking), str(r.wall_ns),
    ])


def write_metrics_csv(path, records):
    lines = [CSV_HEADER] + [_record_to_line(r) for r in records]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))


def read_metrics_csv(path):
    """Parse a metrics CSV back into MetricsRecord rows."""
    text = Path(path).read_text()
    lines = text.strip().split("\n")
    if lines[0] != CSV_HEADER:
        raise InvalidInput(f"{path}: unexpected CSV header")
    records = []
    for line in lines[1:]:
        cells = line.split(",")
        records.append(MetricsRecord(
            step=int(cells[0]), loss=float(cells[1]), grad_nuclear=float(cells[2]),
            grad_frobenius=float(cells[3]), update_kappa=float(cells[4]),
            kpq=float(cells[5]) if cells[5] else None,
            momentum_tracking=float(cells[6]) if cells[6] else None,
            wall_ns=int(cells[7]),
        ))
    return records


def _step_seed(seed: int, t: int) -> int:
    return int(np.random.SeedSequence([seed, t]).generate_state(1)[0])


def _mean_update_kappa(old_params, new_params):
    kappas = []
    for old, new in zip(old_params, new_params):
        if old.ndim != 2:
            continue
        delta = old - new
        if not np.any(delta):
            kappas.append(math.nan)
        else:
            kappas.append(condition_number(delta))
    return float(np.mean(kappas)) if kappas else math.nan


def run_single(problem, config: RunConfig, seed: int):
    """Execute one (seed, optimizer) cell; returns (records, snapshots, status)."""
    opt = config.optimizer
    batch = opt.get("batch_size", 0)
    if batch and problem.n_samples is not None and batch > problem.n_samples:
        raise ConfigError(
            f"optimizer.batch_size: {batch} exceeds problem n_samples {problem.n_samples}"
        )
    init_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    params = tuple(w.copy() for w in problem.init_weights(init_rng))
    states = _make_states(opt, params, config.horizon)
    matrix_idx = [i for i, w in enumerate(params) if w.ndim == 2]
    is_fismo = opt["name"] == "fismo"
    single_matrix = len(matrix_idx) == 1 and len(params) == 1

    records = []
    snapshots = []
    status = "OK"
    for t in range(1, config.horizon + 1):
        t0 = time.perf_counter_ns() if config.record_walltime else 0
        if batch:
            grads = problem.minibatch_gradient(params, batch, _step_seed(seed, t))
        else:
            grads = problem.full_gradient(params)
        full_grads = grads if not batch else problem.full_gradient(params)
        old_params = params
        states = [step(s, g) for s, g in zip(states, grads)]
        params = tuple(s.weights for s in states)

        loss = problem.loss(params)
        grad_nuc, grad_fro = summarize_gradients(full_grads)
        kappa = _mean_update_kappa(old_params, params)
        kpq_val = None
        tracking = None
        if is_fismo:
            kpq_val = float(np.mean([kpq_of(states[i].precond) for i in matrix_idx]))
            tracking = 0.0
            for i in matrix_idx:
                g_tilde = whiten(states[i].precond, grads[i])
                tracking += norm(g_tilde - states[i].momentum, "nuclear")
        wall = time.perf_counter_ns() - t0 if config.record_walltime else 0
        records.append(MetricsRecord(
            step=t, loss=loss, grad_nuclear=grad_nuc, grad_frobenius=grad_fro,
            update_kappa=kappa, kpq=kpq_val, momentum_tracking=tracking, wall_ns=wall,
        ))
        if config.snapshot_every and is_fismo and single_matrix \
                and t % config.snapshot_every == 0:
            st = states[0]
            snapshots.append(Snapshot(
                step=t, w_before=old_params[0], w_after=st.weights, grad=grads[0],
                momentum=st.momentum, p=st.precond.p, q=st.precond.q,
                eta=st.eta, beta=st.beta,
            ))
        if not math.isfinite(loss):
            status = "FAILED"
            break
    return records, snapshots, status


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_snapshots(path, snapshots):
    np.savez_compressed(
        path,
        steps=np.array([s.step for s in snapshots]),
        w_before=np.stack([s.w_before for s in snapshots]),
        w_after=np.stack([s.w_after for s in snapshots]),
        grad=np.stack([s.grad for s in snapshots]),
        momentum=np.stack([s.momentum for s in snapshots]),
        p=np.stack([s.p for s in snapshots]),
        q=np.stack([s.q for s in snapshots]),
        eta=np.array([s.eta for s in snapshots]),
        beta=np.array([s.beta for s in snapshots]),
    )


def load_snapshots(path):
    with np.load(path) as data:
        return [
            Snapshot(
                step=int(data["steps"][i]), w_before=data["w_before"][i],
                w_after=data["w_after"][i], grad=data["grad"][i],
                momentum=data["momentum"][i], p=data["p"][i], q=data["q"][i],
                eta=float(data["eta"][i]), beta=float(data["beta"][i]),
            )
            for i in range(len(data["steps"]))
        ]


def run(config: RunConfig):
    """Run every seed of a config; writes CSVs, snapshots, and manifest.json.

    Returns the list of CSV paths written.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(**config.problem)
    manifest_runs = []
    paths = []
    for seed in config.seeds:
        records, snapshots, status = run_single(problem, config, seed)
        csv_path = out / f"{config.label}_seed{seed}.csv"
        write_metrics_csv(csv_path, records)
        paths.append(csv_path)
        entry = {"seed": seed, "csv": csv_path.name, "status": status,
                 "sha256": _sha256(csv_path)}
        if snapshots:
            snap_path = out / f"{config.label}_seed{seed}_snapshots.npz"
            save_snapshots(snap_path, snapshots)
            entry["snapshots"] = snap_path.name
        manifest_runs.append(entry)
    manifest = {
        "version": f"fismo-{__version__}",
        "config": {
            "problem": config.problem, "optimizer": config.optimizer,
            "horizon": config.horizon, "seeds": list(config.seeds),
            "output_dir": config.output_dir, "snapshot_every": config.snapshot_every,
            "record_walltime": config.record_walltime,
        },
        "runs": manifest_runs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths


# ------------------------------------------------------------------ compare

def compare(configs):
    """Run several configs on one problem/horizon and tabulate the results.

    Returns (summary dict keyed by optimizer label, human-readable table).
    """
    if not configs:
        raise InvalidInput("compare needs at least one config")
    base_problem = configs[0].problem
    base_horizon = configs[0].horizon
    for cfg in configs[1:]:
        if cfg.problem != base_problem or cfg.horizon != base_horizon:
            raise InvalidInput("compare requires a shared problem and horizon")
    labels = [cfg.label for cfg in configs]
    if len(set(labels)) != len(labels):
        raise InvalidInput("compare requires distinct optimizer labels")

    summary = {}
    for cfg in configs:
        run(cfg)
        final_losses, best_losses, kappas, nucs = [], [], [], []
        for seed in cfg.seeds:
            records = read_metrics_csv(Path(cfg.output_dir) / f"{cfg.label}_seed{seed}.csv")
            losses = [r.loss for r in records]
            final_losses.append(losses[-1])
            best_losses.append(min(losses))
            kappas.extend(r.update_kappa for r in records)
            nucs.extend(r.grad_nuclear for r in records)
        summary[cfg.label] = {
            "final_loss": float(np.median(final_losses)),
            "best_loss": float(np.median(best_losses)),
            "median_kappa": float(np.nanmedian(kappas)),
            "avg_grad_nuclear": float(np.mean(nucs)),
        }

    widths = max(len(label) for label in summary)
    header = (f"{'optimizer':<{widths}}  {'final_loss':>12}  {'best_loss':>12}  "
              f"{'median_kappa':>12}  {'avg_grad_nuc':>12}")
    rows = [header, "-" * len(header)]
    for label, stats in summary.items():
        rows.append(
            f"{label:<{widths}}  {stats['final_loss']:>12.6g}  {stats['best_loss']:>12.6g}  "
            f"{stats['median_kappa']:>12.6g}  {stats['avg_grad_nuclear']:>12.6g}"
        )
    return summary, "\n".join(rows)
