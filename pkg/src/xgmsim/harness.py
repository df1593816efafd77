"""Config-driven experiment runner: grids x seeds, persistence, reproducibility.

An experiment is a flat key-value config expanded into a grid of cells
(network width K, noise sigma, protocol, decay strength, controlled angle),
each run over a list of seeds.  Every run writes one row per recorded step
into ``trajectories.csv`` (long format), one summary row into
``summary.csv``, and the resolved config, schema, seeds and per-run status
into ``manifest.json``.  Reals are written with 17 significant digits so
replays are byte-identical; runs execute in parallel but results are always
written in (cell, seed) order, so worker scheduling never changes outputs.

The ``sgd-reference`` kind trains an explicit finite-dimensional network on
streamed samples under the same schedule and emits the identical schema, so
ODE and finite-d runs diff column by column.  Its per-sample step size is
eta_tilde/d — the scaling under which d samples advance one unit of ODE
time — and its paired ODE run uses dt = 1/d.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import traceback
from dataclasses import asdict, dataclass, replace
from multiprocessing import get_context

import numpy as np

from . import __version__
from .dynamics import OdeConfig, TrajectoryRecord, integrate, rate_eval
from .finite_net import FiniteNet, SgdConfig, measure_order_params, sgd_step
from .metrics import coverage, population_loss, zero_noise_error
from .mixture import ClusterId, MixtureSpec, Sample
from .schedule import FADING_CHANNEL, NOISE_CHANNEL, Schedule, make_schedule
from .state import (OrderState, aligned_state_with_free_neuron, controlled_init,
                    embed_state, random_init)

KINDS = (
    "lottery-sweep",
    "protocol-compare",
    "controlled-theta",
    "rate-heatmap",
    "interplay",
    "regularisation",
    "difficulty-variants",
    "destabilisation",
    "sgd-reference",
    "ode-run",
)

#: Config keys that do not change results and stay out of the config hash.
_OPERATIONAL_KEYS = ("out_dir", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "ode-run"
    k: tuple[int, ...] = (4,)
    sigma: tuple[float, ...] = (0.4,)
    protocol: tuple[str, ...] = ("no-fading",)
    weight_decay: tuple[float, ...] = (0.0,)
    channel: str = FADING_CHANNEL
    alpha: float = 0.1
    phi_max: float = 3.0
    sigma_easy: float = 0.1
    levels: int = 0
    easy_samples: int = 0          # > 0 fixes the easy-window sample count
    steps: int = 10_000
    eta_tilde: float = 2.5
    mc_samples: int = 4000
    loss_mc: int = 4000
    decay_both_layers: bool = False
    record_every: int = 50
    coverage_tau: float = 0.5
    seeds: tuple[int, ...] = tuple(range(8))
    d0: int = 1000                 # init dimension for the order parameters
    d: int = 0                     # ambient dimension (sgd-reference only)
    # controlled-theta / rate-heatmap parameters
    theta_grid: tuple[float, ...] = ()
    rho1: float = 0.1
    rate_mode: str = "m11"         # m11 | rho1
    m11_grid: tuple[float, ...] = ()
    rho1_grid: tuple[float, ...] = ()
    m12: float = 0.8
    theta1: float = 0.0
    phi_grid: tuple[float, ...] = ()
    # operational
    out_dir: str = "runs"
    workers: int = 1
    reproducible: bool = True

    def config_hash(self) -> str:
        payload = {key: v for key, v in asdict(self).items()
                   if key not in _OPERATIONAL_KEYS}
        blob = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


# ---------------------------------------------------------------------------
# config file parsing (flat key = value lines, lists comma-separated)

_TUPLE_FIELDS = {"k", "sigma", "protocol", "weight_decay", "seeds", "theta_grid",
                 "m11_grid", "rho1_grid", "phi_grid"}
_INT_FIELDS = {"levels", "easy_samples", "steps", "mc_samples", "loss_mc",
               "record_every", "d0", "d", "workers"}
_FLOAT_FIELDS = {"alpha", "phi_max", "sigma_easy", "eta_tilde", "coverage_tau",
                 "rho1", "m12", "theta1"}
_BOOL_FIELDS = {"decay_both_layers", "reproducible"}
_STR_FIELDS = {"kind", "channel", "rate_mode", "out_dir"}


class ConfigError(ValueError):
    pass


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    """Parse the flat ``key = value`` format; '#' starts a comment."""
    cfg = ExperimentConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            if key in _TUPLE_FIELDS:
                items = [v.strip() for v in val.split(",") if v.strip()]
                if key == "protocol":
                    parsed = tuple(items)
                elif key in ("k", "seeds"):
                    parsed = tuple(int(v) for v in items)
                else:
                    parsed = tuple(float(v) for v in items)
            elif key in _INT_FIELDS:
                parsed = int(val)
            elif key in _FLOAT_FIELDS:
                parsed = float(val)
            elif key in _BOOL_FIELDS:
                if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError("expected a boolean")
                parsed = val.lower() in ("true", "1", "yes")
            elif key in _STR_FIELDS:
                parsed = val
            elif key == "seed_count":
                parsed = tuple(range(int(val)))
                key = "seeds"
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {err}") from None
        cfg = replace(cfg, **{key: parsed})
    validate_config(cfg)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), path=path)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    if any(kk < 1 for kk in cfg.k):
        raise ConfigError("k values must be >= 1")
    if any(s < 0 for s in cfg.sigma):
        raise ConfigError("sigma values must be >= 0")
    if not 0.0 < cfg.alpha <= 1.0:
        raise ConfigError("alpha must lie in (0, 1]")
    if cfg.channel not in (FADING_CHANNEL, NOISE_CHANNEL):
        raise ConfigError(f"unknown channel {cfg.channel!r}")
    if cfg.kind == "sgd-reference" and cfg.d < 100:
        raise ConfigError("sgd-reference needs d >= 100")
    if cfg.kind == "controlled-theta" and not cfg.theta_grid:
        raise ConfigError("controlled-theta needs a theta_grid")
    if cfg.kind == "rate-heatmap":
        if not cfg.phi_grid:
            raise ConfigError("rate-heatmap needs a phi_grid")
        if cfg.rate_mode not in ("m11", "rho1"):
            raise ConfigError("rate_mode must be m11 or rho1")
        grid = cfg.m11_grid if cfg.rate_mode == "m11" else cfg.rho1_grid
        if not grid:
            raise ConfigError(f"rate-heatmap ({cfg.rate_mode}) needs its value grid")


# ---------------------------------------------------------------------------
# run expansion


@dataclass(frozen=True)
class RunSpec:
    cell: int
    seed: int
    k: int
    sigma: float
    protocol: str
    weight_decay: float
    theta1: float = float("nan")
    rho1: float = float("nan")

    @property
    def run_id(self) -> str:
        return f"c{self.cell:03d}-s{self.seed}"


def expand_runs(cfg: ExperimentConfig) -> list[RunSpec]:
    specs = []
    cell = 0
    controlled = cfg.kind == "controlled-theta"
    thetas = cfg.theta_grid if controlled else (float("nan"),)
    rhos = ((cfg.rho1_grid or (cfg.rho1,)) if controlled else (float("nan"),))
    for kk in cfg.k:
        for sg in cfg.sigma:
            for proto in cfg.protocol:
                for wd in cfg.weight_decay:
                    for th in thetas:
                        for rho in rhos:
                            for seed in cfg.seeds:
                                specs.append(RunSpec(cell, seed, kk, sg, proto,
                                                     wd, th, rho))
                            cell += 1
    return specs


def _init_rng(seed: int) -> np.random.Generator:
    # distinct stream family from the dynamics rng inside integrate()
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(101,)))


def initial_state(cfg: ExperimentConfig, rs: RunSpec) -> OrderState:
    if cfg.kind == "controlled-theta":
        return controlled_init(rs.theta1, rs.rho1)
    return random_init(rs.k, cfg.d0, _init_rng(rs.seed))


def _schedule_for(cfg: ExperimentConfig, rs: RunSpec, total_steps: int) -> Schedule:
    return make_schedule(
        rs.protocol,
        total_steps=total_steps,
        channel=cfg.channel,
        phi_max=cfg.phi_max,
        sigma_easy=cfg.sigma_easy,
        sigma_hard=rs.sigma,
        alpha=cfg.alpha,
        easy_samples=cfg.easy_samples if cfg.easy_samples > 0 else None,
        levels=cfg.levels,
        permutation_seed=rs.seed,
    )


def _ode_config(cfg: ExperimentConfig, rs: RunSpec, dt: float = 1.0) -> OdeConfig:
    return OdeConfig(
        eta_tilde=cfg.eta_tilde,
        mc_samples=cfg.mc_samples,
        weight_decay=rs.weight_decay,
        decay_both_layers=cfg.decay_both_layers,
        steps=cfg.steps,
        record_every=cfg.record_every,
        seed=rs.seed,
        dt=dt,
        loss_mc=cfg.loss_mc,
        coverage_tau=cfg.coverage_tau,
    )


# ---------------------------------------------------------------------------
# single-run execution (worker side)


def _run_ode(cfg: ExperimentConfig, rs: RunSpec) -> tuple[TrajectoryRecord, float]:
    """One ODE run at the ballistic time normalisation dt = 1/d0.

    One step is one presented sample of a d0-dimensional learner, whose
    per-sample order-parameter increments are O(1/d0); d0 also sets the
    initial-fluctuation scale, so a single config value fixes both.
    """
    state0 = initial_state(cfg, rs)
    spec = MixtureSpec(sigma=rs.sigma)
    sched = _schedule_for(cfg, rs, max(cfg.steps, 1))
    dt = 1.0 / cfg.d0
    rec = integrate(state0, spec, sched, _ode_config(cfg, rs, dt=dt))
    return rec, dt


def _run_sgd(cfg: ExperimentConfig, rs: RunSpec) -> tuple[TrajectoryRecord, float]:
    """Finite-d reference run recording measured order parameters.

    One recorded 'step' equals one presented sample; the per-sample step size
    eta_tilde/d makes d samples correspond to one unit of ODE time, so a
    matching ODE run uses dt = 1/d over the same number of steps.
    """
    d = cfg.d
    dt = 1.0 / d
    state0 = initial_state(cfg, rs)
    w0 = embed_state(state0, d)
    net = FiniteNet(w=w0, b=state0.b.copy(), v=state0.v.copy())
    spec0 = MixtureSpec(sigma=rs.sigma)
    sched = _schedule_for(cfg, rs, max(cfg.steps, 1))
    scfg = SgdConfig(eta_tilde=cfg.eta_tilde * dt,
                     weight_decay=rs.weight_decay,
                     decay_both_layers=cfg.decay_both_layers)
    ss = np.random.SeedSequence(entropy=rs.seed, spawn_key=(202,))
    rng_stream, rng_met = (np.random.default_rng(s) for s in ss.spawn(2))
    ocfg = _ode_config(cfg, rs, dt=dt)

    rec = TrajectoryRecord()
    values = sched.values() if cfg.steps > 0 else np.array([])

    def record(step: int) -> None:
        state = measure_order_params(net)
        phi_t, sig_t = _phi_sigma(cfg, spec0, values, min(step, cfg.steps - 1))
        ls, se = population_loss(state, spec0, cfg.loss_mc, rng_met)
        qd = np.diag(state.q)
        safe = np.where(qd > 0, qd, 1.0)
        rec.steps.append(step)
        rec.times.append(step * dt)
        rec.phi.append(phi_t)
        rec.sigma.append(sig_t)
        rec.loss.append(ls)
        rec.loss_se.append(se)
        rec.zero_noise_err.append(zero_noise_error(state))
        rec.covered.append(coverage(state, cfg.coverage_tau).covered)
        rec.rho.append(np.where(qd > 0, (state.m**2).sum(axis=1) / safe, 0.0))
        rec.theta.append(np.where(qd > 0, np.arctan2(np.abs(state.m[:, 1]),
                                                     state.m[:, 0]), np.nan))
        rec.states.append(state)

    record(0)
    block = 1024
    for start in range(0, cfg.steps, block):
        stop = min(start + block, cfg.steps)
        z = rng_stream.standard_normal((stop - start, d))
        axes = rng_stream.integers(1, 3, size=stop - start)
        signs = 1 - 2 * rng_stream.integers(0, 2, size=stop - start)
        for t in range(start, stop):
            phi_t, sig_t = _phi_sigma(cfg, spec0, values, t)
            i = t - start
            x = z[i] * sig_t
            x[axes[i] - 1] += signs[i] * phi_t
            samp = Sample(input=x, label=1 if axes[i] == 1 else 0,
                          cluster=ClusterId(int(axes[i]), int(signs[i])),
                          fading_used=phi_t)
            sgd_step(net, samp, scfg)
            if (t + 1) % cfg.record_every == 0 or t + 1 == cfg.steps:
                record(t + 1)
    return rec, dt


def _phi_sigma(cfg, spec0, values, step):
    if len(values) == 0:
        return spec0.fading, spec0.sigma
    val = float(values[min(step, len(values) - 1)])
    if cfg.channel == FADING_CHANNEL:
        return val, spec0.sigma
    return 1.0, val


def run_single(cfg: ExperimentConfig, rs: RunSpec) -> dict:
    """Execute one run and package rows; exceptions become failure records."""
    t0 = time.time()
    try:
        if cfg.kind == "sgd-reference":
            rec, dt = _run_sgd(cfg, rs)
        else:
            rec, dt = _run_ode(cfg, rs)
        return _package(cfg, rs, rec, time.time() - t0)
    except Exception as err:
        return {
            "run_id": rs.run_id,
            "status": "failed",
            "error": f"{type(err).__name__}: {err}",
            "traceback": traceback.format_exc(limit=6),
            "spec": asdict(rs),
            "wall_clock": time.time() - t0,
            "traj_rows": [],
            "summary_row": None,
        }


def _state_columns(k: int) -> list[str]:
    cols = [f"q_{i+1}_{j+1}" for i in range(k) for j in range(k)]
    cols += [f"m_{i+1}_{a+1}" for i in range(k) for a in range(2)]
    cols += [f"v_{i+1}" for i in range(k)]
    cols += [f"b_{i+1}" for i in range(k)]
    return cols


def trajectory_columns(k: int) -> list[str]:
    head = ["run_id", "cell", "seed", "k", "sigma", "protocol", "weight_decay",
            "theta1", "rho1_init", "step", "t", "phi", "sigma_step", "loss",
            "loss_se", "zero_noise_error", "coverage"]
    head += [f"rho_{i+1}" for i in range(k)]
    head += [f"theta_{i+1}" for i in range(k)]
    head += [f"relnorm_{i+1}" for i in range(k)]
    return head + _state_columns(k)


SUMMARY_COLUMNS = [
    "run_id", "cell", "seed", "k", "sigma", "protocol", "weight_decay",
    "theta1", "rho1_init", "status", "config_hash", "steps", "final_loss", "final_loss_se",
    "final_zero_noise_error", "final_coverage", "final_m11", "final_m12",
    "final_rho1", "final_theta1_out", "jitter_events", "refined_steps",
    "projection_events",
]


def _package(cfg: ExperimentConfig, rs: RunSpec, rec: TrajectoryRecord,
             wall: float) -> dict:
    traj_rows = []
    base = [rs.run_id, rs.cell, rs.seed, rs.k, rs.sigma, rs.protocol,
            rs.weight_decay, rs.theta1, rs.rho1]
    for i, step in enumerate(rec.steps):
        st = rec.states[i]
        relnorm = np.sqrt((st.m**2).sum(axis=1))
        row = base + [step, rec.times[i], rec.phi[i], rec.sigma[i], rec.loss[i],
                      rec.loss_se[i], rec.zero_noise_err[i], rec.covered[i]]
        row += list(rec.rho[i]) + list(rec.theta[i]) + list(relnorm)
        row += list(st.flat())
        traj_rows.append(row)

    final = rec.final_state
    qd = float(final.q[0, 0])
    rho1 = float((final.m[0] @ final.m[0]) / qd) if qd > 0 else float("nan")
    theta1_out = float(np.arctan2(abs(final.m[0, 1]), final.m[0, 0])) if qd > 0 else float("nan")
    summary_row = [
        rs.run_id, rs.cell, rs.seed, rs.k, rs.sigma, rs.protocol,
        rs.weight_decay, rs.theta1, rs.rho1, "ok", cfg.config_hash(), cfg.steps,
        rec.loss[-1], rec.loss_se[-1], rec.zero_noise_err[-1], rec.covered[-1],
        float(final.m[0, 0]), float(final.m[0, 1]), rho1, theta1_out,
        rec.jitter_events, rec.refined_steps, rec.projection_events,
    ]
    return {
        "run_id": rs.run_id,
        "status": "ok",
        "spec": asdict(rs),
        "wall_clock": wall,
        "traj_rows": traj_rows,
        "summary_row": summary_row,
        "max_gram_violation": max(s.gram_violation() for s in rec.states),
    }


# ---------------------------------------------------------------------------
# ensemble driver


def _worker(args):
    cfg, rs = args
    return run_single(cfg, rs)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute the full grid x seed ensemble and write the output files.

    Returns the manifest dict.  One failing run never aborts the ensemble;
    failures are listed in the manifest with their reproduction seeds and the
    process exit status (via the CLI) reflects them.
    """
    if cfg.kind == "rate-heatmap":
        return run_rate_heatmap(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    runs = expand_runs(cfg)
    jobs = [(cfg, rs) for rs in runs]
    if cfg.workers > 1:
        ctx = get_context("fork")
        with ctx.Pool(processes=cfg.workers, initializer=_limit_blas) as pool:
            results = pool.map(_worker, jobs, chunksize=1)
    else:
        results = [_worker(j) for j in jobs]

    kmax = max(cfg.k)
    traj_rows, summary_rows, statuses, failures = [], [], [], []
    for rs, res in zip(runs, results):
        statuses.append({"run_id": res["run_id"], "status": res["status"],
                         "wall_clock": round(res["wall_clock"], 3),
                         **({"error": res["error"]} if res["status"] != "ok" else {})})
        if res["status"] == "ok":
            traj_rows.extend(_pad_row(r, rs.k, kmax) for r in res["traj_rows"])
            summary_rows.append(res["summary_row"])
        else:
            failures.append({"run_id": res["run_id"], "seed": rs.seed,
                             "cell": rs.cell, "error": res["error"]})

    _write_csv(os.path.join(cfg.out_dir, "trajectories.csv"),
               trajectory_columns(kmax), traj_rows)
    _write_csv(os.path.join(cfg.out_dir, "summary.csv"),
               SUMMARY_COLUMNS, summary_rows)
    manifest = {
        "version": __version__,
        "kind": cfg.kind,
        "config": {k: v for k, v in asdict(cfg).items()},
        "config_hash": cfg.config_hash(),
        "seeds": list(cfg.seeds),
        "n_runs": len(runs),
        "n_failed": len(failures),
        "failures": failures,
        "runs": statuses,
        "columns": {
            "trajectories": trajectory_columns(kmax),
            "summary": SUMMARY_COLUMNS,
        },
    }
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def _pad_row(row, k: int, kmax: int):
    """Pad a K<Kmax trajectory row out to the Kmax column layout with nans."""
    if k == kmax:
        return row
    head = row[:17]
    per = row[17:]
    nan = float("nan")
    rho, theta, reln = per[:k], per[k:2 * k], per[2 * k:3 * k]
    state = per[3 * k:]
    q = state[:k * k]
    m = state[k * k:k * k + 2 * k]
    v = state[k * k + 2 * k:k * k + 3 * k]
    b = state[k * k + 3 * k:]
    pad = [nan] * (kmax - k)
    qpad = []
    for i in range(kmax):
        for j in range(kmax):
            qpad.append(q[i * k + j] if i < k and j < k else nan)
    out = list(head)
    out += list(rho) + pad + list(theta) + pad + list(reln) + pad
    out += qpad
    out += list(m) + [nan] * 2 * (kmax - k)
    out += list(v) + pad + list(b) + pad
    return out


def _limit_blas():
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


# ---------------------------------------------------------------------------
# rate heatmap (single-process: a grid of uncommitted increments)


def rate_state(cfg: ExperimentConfig, value: float) -> OrderState:
    """Controlled K=4 state for one heatmap cell.

    m11 mode: neuron 1 at alignment (value, m12) with manifold mass rho1.
    rho1 mode: neuron 1 at unit norm, angle theta1, manifold mass ``value``.
    """
    if cfg.rate_mode == "m11":
        return aligned_state_with_free_neuron((value, cfg.m12), cfg.rho1)
    r = np.sqrt(value)
    return aligned_state_with_free_neuron(
        (r * np.cos(cfg.theta1), r * np.sin(cfg.theta1)),
        value if value > 0 else 0.0,
    )


RATE_COLUMNS = ["phi", "value", "rate_mode", "sigma", "d_m11", "d_rho1"]


def run_rate_heatmap(cfg: ExperimentConfig) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    grid = cfg.m11_grid if cfg.rate_mode == "m11" else cfg.rho1_grid
    sigma = cfg.sigma[0]
    rows = []
    for phi in cfg.phi_grid:
        for value in grid:
            state = rate_state(cfg, value)
            spec = MixtureSpec(sigma=sigma, fading=phi)
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=cfg.seeds[0], spawn_key=(303,)))
            ocfg = _ode_config(cfg, RunSpec(0, cfg.seeds[0], 4, sigma,
                                            "no-fading", 0.0))
            ev = rate_eval(state, spec, ocfg, rng)
            rows.append([phi, value, cfg.rate_mode, sigma, ev.d_m11, ev.d_rho1])
    _write_csv(os.path.join(cfg.out_dir, "rates.csv"), RATE_COLUMNS, rows)
    manifest = {
        "version": __version__,
        "kind": cfg.kind,
        "config": {k: v for k, v in asdict(cfg).items()},
        "config_hash": cfg.config_hash(),
        "n_runs": len(rows),
        "n_failed": 0,
        "failures": [],
        "columns": {"rates": RATE_COLUMNS},
    }
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest
