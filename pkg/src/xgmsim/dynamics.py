"""Euler integration of the order-parameter evolution under a schedule.

One unit of time advances the state by

    dQ_kl = eta·(v_k A[k,l] + v_l A[l,k]) + eta^2·v_k v_l B[k,l] − 2·eta·wd·Q_kl
    dM_ka = eta·v_k A[k, K+a] − eta·wd·M_ka
    dv_k  = eta·D_k                (− eta·wd·v_k with decay on both layers)
    db_k  = eta·v_k E_k

with eta the rescaled learning rate.  ode_step is the unit-time Euler map;
integrate advances ``steps`` steps of size ``dt``.  One presented sample of a
d-dimensional learner moves the order parameters by O(1/d), so a run that
emulates such a learner uses dt = 1/d: the harness does this for every
schedule ensemble (with d = the simulated dimension d0) and for the finite-d
reference pairing (see harness).  Q is re-symmetrised every step so
Monte-Carlo noise cannot accumulate asymmetry.

Large dt can make the map stiff (under a strong fading boost alignments can
e-fold several times per unit time), so ``integrate`` refines a step into
smaller substeps whenever its increment would move the state by more than a
small fraction of its scale.  The refinement is deterministic given the seed
and dormant at the 1/d step sizes the harness uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import DEFAULT_TAU, coverage, population_loss, zero_noise_error
from .mixture import MixtureSpec
from .moments import ExpectationSet, estimate_expectations
from .schedule import FADING_CHANNEL, Schedule
from .state import OrderState, project_realisable, schur_violation


@dataclass(frozen=True)
class OdeConfig:
    eta_tilde: float = 2.5
    mc_samples: int = 4000
    weight_decay: float = 0.0
    decay_both_layers: bool = False
    steps: int = 10_000
    record_every: int = 50
    seed: int = 0
    dt: float = 1.0
    loss_mc: int = 4000
    coverage_tau: float = DEFAULT_TAU
    frozen_noise: bool = False
    motion_cap: float = 0.1
    substep_trigger: float = 0.25
    max_substeps: int = 1024

    def __post_init__(self):
        if self.eta_tilde <= 0:
            raise ValueError("eta_tilde must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.mc_samples < 8 or self.loss_mc < 8:
            raise ValueError("mc_samples and loss_mc must be >= 8")


@dataclass
class TrajectoryRecord:
    """Time series of one run at the recording cadence (step 0 and final
    step always included)."""

    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    phi: list[float] = field(default_factory=list)
    sigma: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    loss_se: list[float] = field(default_factory=list)
    zero_noise_err: list[float] = field(default_factory=list)
    covered: list[int] = field(default_factory=list)
    rho: list[np.ndarray] = field(default_factory=list)
    theta: list[np.ndarray] = field(default_factory=list)
    states: list[OrderState] = field(default_factory=list)
    jitter_events: int = 0
    refined_steps: int = 0
    projection_events: int = 0

    @property
    def final_state(self) -> OrderState:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.steps)


def _increments(state: OrderState, exps: ExpectationSet, cfg: OdeConfig):
    """Per-unit-time increments (dq, dm, dv, db) of the Euler map."""
    eta = cfg.eta_tilde
    k = state.k
    v = state.v
    a_qpart = v[:, None] * exps.a[:, :k]  # v_k A[k, l]
    dq = eta * (a_qpart + a_qpart.T) + eta**2 * np.outer(v, v) * exps.b
    dm = eta * v[:, None] * exps.a[:, k:]
    dv = eta * exps.d
    db = eta * v * exps.e
    if cfg.weight_decay > 0:
        wd = cfg.weight_decay
        dq = dq - 2.0 * eta * wd * state.q
        dm = dm - eta * wd * state.m
        if cfg.decay_both_layers:
            dv = dv - eta * wd * v
    return dq, dm, dv, db


def ode_step(state: OrderState, exps: ExpectationSet, cfg: OdeConfig,
             dt: float | None = None) -> OrderState:
    """One explicit Euler step; returns a new state, input untouched."""
    if not exps.finite():
        raise FloatingPointError("non-finite expectation entries")
    h = cfg.dt if dt is None else dt
    dq, dm, dv, db = _increments(state, exps, cfg)
    q = state.q + h * dq
    q = 0.5 * (q + q.T)
    return OrderState(q=q, m=state.m + h * dm, v=state.v + h * dv,
                      b=state.b + h * db, t=state.t)


def _relative_motion(state: OrderState, exps: ExpectationSet, cfg: OdeConfig) -> float:
    """Largest state motion of one dt-step, relative to the state's scale."""
    dq, dm, dv, db = _increments(state, exps, cfg)
    scale_q = max(float(np.diag(state.q).max(initial=0.0)), 1.0)
    motion = max(
        float(np.abs(dq).max(initial=0.0)) / scale_q,
        float(np.abs(dm).max(initial=0.0)) / np.sqrt(scale_q),
        float(np.abs(dv).max(initial=0.0)) / max(float(np.abs(state.v).max(initial=0.0)), 1.0),
        float(np.abs(db).max(initial=0.0)) / max(float(np.abs(state.b).max(initial=0.0)), 1.0),
    ) * cfg.dt
    if not np.isfinite(motion):
        raise FloatingPointError("non-finite increment while choosing substeps")
    return motion


def _refine_step(state, exps, spec_t, cfg, rng_dyn, rec, base):
    """Advance one dt-step with adaptively sized Euler substeps.

    Each substep's relative motion is bounded by motion_cap with a freshly
    estimated drift, so growth inside a stiff window cannot outrun the
    refinement; substep sizes are floored at dt/max_substeps.
    """
    remaining = cfg.dt
    first = True
    while remaining > 1e-12 * cfg.dt:
        if not first:
            exps = estimate_expectations(state, spec_t, cfg.mc_samples, rng_dyn,
                                         base_normals=base)
            if exps.jitter > 0:
                rec.jitter_events += 1
        first = False
        unit_motion = _relative_motion(state, exps, cfg) / cfg.dt
        h = cfg.dt if unit_motion <= 0 else cfg.motion_cap / unit_motion
        h = min(remaining, max(h, cfg.dt / cfg.max_substeps))
        state = _commit(ode_step(state, exps, cfg, dt=h), rec)
        remaining -= h
    return state


def _commit(state: OrderState, rec: TrajectoryRecord) -> OrderState:
    """Project a freshly stepped state back into the realisable cone if the
    step overshot it (boundary-riding dynamics), counting the event."""
    projected = project_realisable(state)
    if projected is not state:
        rec.projection_events += 1
    return projected


def _due(step: int, cfg: OdeConfig) -> bool:
    return step % cfg.record_every == 0 or step == cfg.steps


def _record(rec: TrajectoryRecord, state: OrderState, step: int, phi: float,
            sigma: float, cfg: OdeConfig, spec_eval: MixtureSpec,
            rng_metrics: np.random.Generator) -> None:
    ls, se = population_loss(state, spec_eval, cfg.loss_mc, rng_metrics)
    qd = np.diag(state.q)
    safe = np.where(qd > 0, qd, 1.0)
    rho = np.where(qd > 0, (state.m**2).sum(axis=1) / safe, 0.0)
    theta = np.where(
        qd > 0, np.arctan2(np.abs(state.m[:, 1]), state.m[:, 0]), np.nan
    )
    rec.steps.append(step)
    rec.times.append(step * cfg.dt)
    rec.phi.append(phi)
    rec.sigma.append(sigma)
    rec.loss.append(ls)
    rec.loss_se.append(se)
    rec.zero_noise_err.append(zero_noise_error(state))
    rec.covered.append(coverage(state, cfg.coverage_tau).covered)
    rec.rho.append(rho)
    rec.theta.append(theta)
    rec.states.append(state.copy())


def integrate(
    state0: OrderState,
    spec_base: MixtureSpec,
    schedule: Schedule,
    cfg: OdeConfig,
) -> TrajectoryRecord:
    """Integrate cfg.steps Euler steps, querying the schedule per step.

    The dynamics and the recorded-metric Monte Carlo use separate child
    streams of cfg.seed, so the trajectory is identical whatever the
    recording cadence.  Failures carry the failing step index.
    """
    if schedule.total_steps < cfg.steps:
        raise ValueError(
            f"schedule covers {schedule.total_steps} steps < cfg.steps = {cfg.steps}"
        )
    ss = np.random.SeedSequence(cfg.seed)
    rng_dyn, rng_met = (np.random.default_rng(s) for s in ss.spawn(2))
    spec_eval = spec_base.with_fading(1.0)
    rec = TrajectoryRecord()
    state = state0.copy()
    base = None
    if cfg.frozen_noise:
        n8 = max(1, -(-cfg.mc_samples // 8))
        base = rng_dyn.standard_normal((n8, state.k + 2))

    phi0, sig0 = _difficulty(spec_base, schedule, 0)
    try:
        _record(rec, state, 0, phi0, sig0, cfg, spec_eval, rng_met)
    except Exception as err:
        raise RuntimeError(f"integration failed at step 0: {err}") from err
    for t in range(cfg.steps):
        phi_t, sig_t = _difficulty(spec_base, schedule, t)
        spec_t = MixtureSpec(sigma=sig_t, fading=phi_t,
                             centroid_overlap=spec_base.centroid_overlap)
        try:
            exps = estimate_expectations(state, spec_t, cfg.mc_samples, rng_dyn,
                                         base_normals=base)
            if exps.jitter > 0:
                rec.jitter_events += 1
            if np.isfinite(cfg.substep_trigger):
                motion = _relative_motion(state, exps, cfg)
                trial = ode_step(state, exps, cfg)
                scale_q = max(float(np.diag(trial.q).max(initial=0.0)), 1.0)
                refine = motion > cfg.substep_trigger or (
                    schur_violation(trial) > 1e-3 * scale_q
                )
            else:
                # literal unit-step map: overshoots are projected, never split
                trial = ode_step(state, exps, cfg)
                refine = False
            if not refine:
                state = _commit(trial, rec)
            else:
                rec.refined_steps += 1
                state = _refine_step(state, exps, spec_t, cfg, rng_dyn, rec,
                                     base)
        except Exception as err:
            raise RuntimeError(f"integration failed at step {t}: {err}") from err
        if _due(t + 1, cfg):
            _record(rec, state, t + 1, phi_t, sig_t, cfg, spec_eval, rng_met)
    return rec


def _difficulty(spec_base: MixtureSpec, schedule: Schedule, step: int):
    """(phi, sigma) in force at a step, whatever the schedule channel."""
    val = schedule.difficulty_at(min(step, schedule.total_steps - 1))
    if schedule.channel == FADING_CHANNEL:
        return val, spec_base.sigma
    return 1.0, val


@dataclass(frozen=True)
class RateEval:
    """Uncommitted unit-step increments at a state: the growth rate of the
    free neuron's alignment with its target centroid and of its manifold
    mass, plus the full state increment."""

    d_m11: float
    d_rho1: float
    d_state: dict


def rate_eval(
    state: OrderState,
    spec: MixtureSpec,
    cfg: OdeConfig,
    rng: np.random.Generator,
) -> RateEval:
    """Unit-time increment of M_11 and rho_1 without committing the step.

    d(rho_1) follows by the chain rule from the increments of M_11, M_12 and
    Q_11 evaluated at the current state.
    """
    q11 = state.q[0, 0]
    if q11 <= 0:
        raise ValueError("rate evaluation needs Q_11 > 0")
    exps = estimate_expectations(state, spec, cfg.mc_samples, rng)
    stepped = ode_step(state, exps, cfg, dt=1.0)
    d_m11 = stepped.m[0, 0] - state.m[0, 0]
    d_m12 = stepped.m[0, 1] - state.m[0, 1]
    d_q11 = stepped.q[0, 0] - state.q[0, 0]
    rho1 = (state.m[0] @ state.m[0]) / q11
    d_rho1 = (2 * state.m[0, 0] * d_m11 + 2 * state.m[0, 1] * d_m12) / q11 \
        - rho1 * d_q11 / q11
    d_state = {
        "q": stepped.q - state.q,
        "m": stepped.m - state.m,
        "v": stepped.v - state.v,
        "b": stepped.b - state.b,
    }
    return RateEval(d_m11=float(d_m11), d_rho1=float(d_rho1), d_state=d_state)
