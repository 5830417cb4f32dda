"""Monte Carlo oracle: absorbed diffusions and Fleming-Viot resurrection.

Euler-Maruyama steps x <- x - grad V(x) dt + sqrt(2 dt / beta) xi with
absorption checked by the post-step predicate (known O(sqrt(dt)) boundary
bias; acceptance runs extrapolate over dt).  The Fleming-Viot ensemble
resurrects each absorbed replica at the position of a survivor chosen
uniformly, so after burn-in the empirical measure approximates the
quasi-stationary distribution and the absorption intensity estimates the
principal Dirichlet eigenvalue.

RNG: Philox counter-based streams (one for noise, an independent jumped
stream for resurrection picks); identical seeds reproduce trajectories bit
for bit on a given backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, Extinction, HorizonExceeded, InsufficientSurvivors
from .fdsolver import DomainSpec

CHUNK_STEPS = 256


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; domain uses the same DomainSpec as the grid oracle."""

    beta: float
    dt: float
    domain: DomainSpec
    n_replicas: int = 1000
    t_burn: float = 1.0
    t_max: float = 10.0
    seed: int = 0

    @property
    def noise_scale(self) -> float:
        return math.sqrt(2.0 * self.dt / self.beta)

    def stability_factor(self, model) -> float:
        """dt * max |grad V|^2 over the domain box; should be well below 1."""
        lo = np.asarray(self.domain.lower, dtype=float)
        hi = np.asarray(self.domain.upper, dtype=float)
        axes = [np.linspace(a, b, 41) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        gmax = float(np.max(np.linalg.norm(model.gradient_many(pts), axis=1)))
        return self.dt * gmax**2


@dataclass(frozen=True)
class ExitSample:
    """One absorption event of the killed diffusion."""

    time: float
    location: np.ndarray
    start: str = "deterministic"
    censored: bool = False


@dataclass
class ExitEnsemble:
    """Vectorized batch of independent first-exit simulations."""

    times: np.ndarray
    locations: np.ndarray
    censored: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def exit_times(self) -> np.ndarray:
        return self.times[~self.censored]

    def mean_exit_time(self) -> tuple[float, float]:
        t = self.exit_times
        return float(np.mean(t)), float(np.std(t, ddof=1) / math.sqrt(t.size))


def _kernel_pieces(model, config: SimConfig):
    domain = config.domain
    if domain.sublevel is not None or domain.basin_of is not None:
        raise ConfigError("MC domains support boxes/intervals with half-space cuts only")
    drift = _kernels.normalize_drift(model.kernel_spec())
    cuts = []
    for c in domain.finite_cuts():
        off = c.alpha / math.sqrt(config.beta)
        if domain.dim == 1:
            cuts.append((c.z[0], c.normal[0], off))
        else:
            cuts.append((c.z[0], c.z[1], c.normal[0], c.normal[1], off))
    dom = _kernels.normalize_domain(domain.dim, domain.lower, domain.upper,
                                    cuts if cuts else None)
    return drift, dom


def _streams(seed: int):
    noise = np.random.Generator(np.random.Philox(seed))
    picks = np.random.Generator(np.random.Philox(seed).jumped(1))
    return noise, picks


def exit_ensemble(model, config: SimConfig, x0, n_traj: int,
                  start: str = "deterministic") -> ExitEnsemble:
    """First-exit times of n_traj independent trajectories.

    x0 is one point (shared start) or an (n_traj, d) array of starts; exits
    beyond t_max are flagged censored with time t_max.
    """
    drift, dom = _kernel_pieces(model, config)
    d = config.domain.dim
    x0 = np.asarray(x0, dtype=float)
    x_all = np.empty((n_traj, d))
    x_all[:] = x0 if x0.ndim > 1 else x0.reshape(1, d)
    exit_all = np.zeros(n_traj, dtype=np.int64)
    censored = np.zeros(n_traj, dtype=bool)

    # active working set, repacked as trajectories die so the noise volume
    # tracks the survivor count; repacking is done here, identically for
    # either backend, so cross-backend equality is preserved
    ids = np.arange(n_traj)
    x = x_all.copy()
    alive = np.ones(n_traj, dtype=np.uint8)
    exit_step = np.zeros(n_traj, dtype=np.int64)
    noise, _ = _streams(config.seed)
    max_steps = int(round(config.t_max / config.dt))
    done = 0
    while done < max_steps and ids.size:
        s = min(CHUNK_STEPS, max_steps - done)
        normals = noise.standard_normal((s, ids.size, d))
        _kernels.step_exits(drift, dom, x, alive, exit_step, config.dt,
                            config.noise_scale, normals, done)
        done += s
        live = alive.view(bool)
        dead = ~live
        if dead.any():
            x_all[ids[dead]] = x[dead]
            exit_all[ids[dead]] = exit_step[dead]
            if live.sum() < 0.7 * ids.size:
                ids = ids[live]
                x = np.ascontiguousarray(x[live])
                alive = np.ones(ids.size, dtype=np.uint8)
                exit_step = np.ascontiguousarray(exit_step[live])
    if ids.size:
        live = alive.view(bool)
        x_all[ids] = x
        censored[ids[live]] = True
        exit_all[ids[~live]] = exit_step[~live]
    times = np.where(censored, config.t_max, exit_all * config.dt)
    return ExitEnsemble(times, x_all, censored,
                        meta={"backend": _kernels.backend_name(),
                              "rng": f"philox4x64({config.seed})",
                              "dt": config.dt, "start": start})


def simulate_exit(model, config: SimConfig, x0) -> ExitSample:
    """Single-trajectory first exit; raises HorizonExceeded if censored."""
    ens = exit_ensemble(model, config, np.asarray(x0, dtype=float), 1)
    if ens.censored[0]:
        raise HorizonExceeded(f"no exit before t_max={config.t_max}")
    return ExitSample(float(ens.times[0]), ens.locations[0])


@dataclass
class FVResult:
    """Fleming-Viot rate estimate with jackknife error bars and QSD samples.

    lifetimes holds complete post-burn-in replica lifetimes; because only
    lifetimes shorter than their remaining observation budget are observed,
    the sample is length-biased, and lifetime_budgets carries each entry's
    budget so tests can condition on it.
    """

    rate: float
    stderr: float
    n_events: int
    lifetimes: np.ndarray       # post-burn-in full replica lifetimes (time units)
    lifetime_budgets: np.ndarray
    exit_positions: np.ndarray  # matching exit locations
    qsd_samples: np.ndarray     # pooled post-burn-in snapshots
    final_positions: np.ndarray
    block_rates: np.ndarray
    meta: dict = field(default_factory=dict)

    def uniformized_lifetimes(self, rate: float | None = None) -> np.ndarray:
        """Conditional CDF values of the lifetimes: U(0,1) under exponentiality.

        Conditioned on being born with observation budget b, an Exp(rate)
        lifetime observed only when below b has CDF value
        (1 - exp(-rate t)) / (1 - exp(-rate b)); this removes the window's
        length bias before a Kolmogorov-Smirnov comparison.
        """
        lam = self.rate if rate is None else rate
        num = -np.expm1(-lam * self.lifetimes)
        den = -np.expm1(-lam * self.lifetime_budgets)
        return num / den


def fleming_viot(model, config: SimConfig, x0=None, *, n_blocks: int = 20,
                 n_snapshots: int = 16) -> FVResult:
    """Evolve the interacting ensemble and estimate the absorption rate.

    The rate is the counting estimator (events per replica-time) over the
    post-burn-in window, with jackknife-over-time-blocks error bars.  The
    Kolmogorov-Smirnov sample exposed in lifetimes contains complete
    post-burn-in lifetimes (born and absorbed inside the window).
    """
    if config.n_replicas < 2:
        raise ConfigError("Fleming-Viot needs at least 2 replicas")
    drift, dom = _kernel_pieces(model, config)
    d = config.domain.dim
    n = config.n_replicas
    if x0 is None:
        x0 = 0.5 * (np.asarray(config.domain.lower, dtype=float)
                    + np.asarray(config.domain.upper, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    x = np.empty((n, d))
    x[:] = x0 if x0.ndim > 1 else x0.reshape(1, d)
    birth = np.zeros(n, dtype=np.int64)

    noise, picks = _streams(config.seed)
    burn_steps = int(round(config.t_burn / config.dt))
    total_steps = int(round(config.t_max / config.dt))
    obs_steps = total_steps - burn_steps
    if obs_steps <= 0:
        raise ConfigError("t_max must exceed t_burn")

    ev_step_all = []
    ev_life_all = []
    ev_pos_all = []
    uni_buffer = np.empty(0)
    uni_used = 0
    snapshots = []
    snap_every = max(1, obs_steps // n_snapshots)
    done = 0
    while done < total_steps:
        s = min(CHUNK_STEPS, total_steps - done)
        normals = noise.standard_normal((s, n, d))
        offset = 0
        while offset < s:
            if uni_buffer.size - uni_used < n:
                uni_buffer = np.concatenate([uni_buffer[uni_used:], picks.random(16384)])
                uni_used = 0
            cap = max(1024, 2 * n)
            evs = np.empty(cap, np.int64)
            evr = np.empty(cap, np.int64)
            evl = np.empty(cap, np.int64)
            evp = np.empty((cap, d))
            steps_done, n_ev, used, extinct = _kernels.fv_step_block(
                drift, dom, x, birth, config.dt, config.noise_scale,
                normals[offset:], uni_buffer[uni_used:], evs, evr, evl, evp,
                done + offset)
            uni_used += used
            if n_ev:
                ev_step_all.append(evs[:n_ev].copy())
                ev_life_all.append(evl[:n_ev].copy())
                ev_pos_all.append(evp[:n_ev].copy())
            if extinct:
                raise Extinction("all replicas absorbed in one step; reduce dt")
            if steps_done == 0:
                raise ConfigError("event buffer stalled; raise the capacity")
            offset += steps_done
        done += s
        # snapshots on chunk boundaries past burn-in approximate the QSD
        if done > burn_steps and ((done - burn_steps) // snap_every
                                  != (done - s - burn_steps) // snap_every):
            snapshots.append(x.copy())

    ev_step = np.concatenate(ev_step_all) if ev_step_all else np.zeros(0, np.int64)
    ev_life = np.concatenate(ev_life_all) if ev_life_all else np.zeros(0, np.int64)
    ev_pos = np.concatenate(ev_pos_all) if ev_pos_all else np.zeros((0, d))

    in_window = ev_step > burn_steps
    n_events = int(np.count_nonzero(in_window))
    t_obs = obs_steps * config.dt
    rate = n_events / (n * t_obs)

    # jackknife over equal time blocks
    edges = burn_steps + np.round(np.linspace(0, obs_steps, n_blocks + 1)).astype(np.int64)
    counts = np.histogram(ev_step[in_window], bins=edges)[0]
    block_t = np.diff(edges) * config.dt * n
    block_rates = counts / block_t
    theta = counts.sum() / block_t.sum()
    loo = (counts.sum() - counts) / (block_t.sum() - block_t)
    stderr = math.sqrt((n_blocks - 1) / n_blocks * float(np.sum((loo - np.mean(loo)) ** 2)))

    full_life = in_window & (ev_step - ev_life > burn_steps)
    lifetimes = ev_life[full_life] * config.dt
    budgets = (total_steps - (ev_step[full_life] - ev_life[full_life])) * config.dt
    qsd = np.concatenate(snapshots, axis=0) if snapshots else x.copy()
    return FVResult(
        rate=rate, stderr=stderr, n_events=n_events,
        lifetimes=lifetimes, lifetime_budgets=budgets,
        exit_positions=ev_pos[full_life],
        qsd_samples=qsd, final_positions=x.copy(), block_rates=block_rates,
        meta={"backend": _kernels.backend_name(),
              "rng": f"philox4x64({config.seed})", "dt": config.dt,
              "theta_check": theta, "n_replicas": n, "t_obs": t_obs},
    )


def exponentiality_pvalue(fv: FVResult, rate: float | None = None) -> tuple[float, float]:
    """Truncation-aware KS test of the lifetimes against the exponential law.

    Returns (statistic, p-value) of the uniformized lifetimes against U(0,1).
    """
    from scipy import stats

    u = fv.uniformized_lifetimes(rate)
    res = stats.kstest(u, "uniform")
    return float(res.statistic), float(res.pvalue)


def side_independence_pvalue(fv: FVResult, rate: float | None = None) -> tuple[float, float]:
    """Two-sample KS p-value of uniformized lifetimes split by 1D exit side.

    Under the product structure of the exit law (time independent of exit
    point from the quasi-stationary start) the two samples share one law.
    """
    from scipy import stats

    if fv.exit_positions.shape[1] != 1:
        raise ConfigError("side test is 1D")
    u = fv.uniformized_lifetimes(rate)
    mid = 0.5 * (fv.exit_positions[:, 0].min() + fv.exit_positions[:, 0].max())
    right = fv.exit_positions[:, 0] > mid
    if right.sum() < 10 or (~right).sum() < 10:
        raise InsufficientSurvivors("too few exits on one side")
    res = stats.ks_2samp(u[right], u[~right])
    return float(res.statistic), float(res.pvalue)


@dataclass
class DecorrelationEstimate:
    """Fitted decay rate of the conditioned law toward the QSD."""

    rate: float
    rate_ci: tuple
    checkpoints: np.ndarray
    tv_distances: np.ndarray
    noise_floor: np.ndarray
    n_survivors: np.ndarray
    fit_window: tuple
    meta: dict = field(default_factory=dict)


def decorrelation_estimate(model, config: SimConfig, x0, *, n_traj: int = 20000,
                           checkpoints=None, bins: int = 25,
                           qsd_samples=None) -> DecorrelationEstimate:
    """Exponential-decay rate of TV(conditioned law at t, QSD) via histograms.

    Runs n_traj independent killed trajectories from x0, records surviving
    positions at each checkpoint, and fits log TV linearly over the window
    where TV sits above 3x the binomial noise floor.  qsd_samples defaults to
    a Fleming-Viot run with the same config.
    """
    if config.domain.dim != 1:
        raise ConfigError("decorrelation_estimate is 1D")
    if qsd_samples is None:
        qsd_samples = fleming_viot(model, config).qsd_samples
    qsd_samples = np.asarray(qsd_samples).reshape(-1)
    if checkpoints is None:
        checkpoints = np.linspace(0.05, 0.45, 9) * (config.t_max / 1.0)
    checkpoints = np.asarray(sorted(checkpoints))
    check_steps = np.unique(np.round(checkpoints / config.dt).astype(np.int64))
    check_steps = check_steps[check_steps > 0]

    lo, hi = config.domain.interval_at(config.beta)
    edges = np.linspace(lo, hi, bins + 1)
    q_hist = np.histogram(qsd_samples, bins=edges)[0].astype(float)
    q = q_hist / q_hist.sum()

    drift, dom = _kernel_pieces(model, config)
    x = np.full((n_traj, 1), float(np.asarray(x0).reshape(-1)[0]))
    alive = np.ones(n_traj, dtype=np.uint8)
    exit_step = np.zeros(n_traj, dtype=np.int64)
    noise, _ = _streams(config.seed + 1)

    tvs, floors, survivors = [], [], []
    done = 0
    for target in check_steps:
        while done < target:
            s = int(min(CHUNK_STEPS, target - done))
            normals = noise.standard_normal((s, n_traj, 1))
            _kernels.step_exits(drift, dom, x, alive, exit_step, config.dt,
                                config.noise_scale, normals, done)
            done += s
        live = alive.view(bool)
        n_live = int(live.sum())
        if n_live < 50:
            raise InsufficientSurvivors(
                f"only {n_live} survivors at t={target * config.dt:.3g}")
        p_hist = np.histogram(x[live, 0], bins=edges)[0].astype(float)
        p = p_hist / p_hist.sum()
        tvs.append(0.5 * float(np.abs(p - q).sum()))
        floors.append(math.sqrt(2.0 / math.pi) * 0.5
                      * float(np.sum(np.sqrt(np.maximum(q * (1 - q), 1e-12) / n_live))))
        survivors.append(n_live)

    tvs = np.array(tvs)
    floors = np.array(floors)
    survivors = np.array(survivors)
    times = check_steps * config.dt
    usable = tvs > 3.0 * floors
    if usable.sum() < 3:
        raise InsufficientSurvivors("fewer than 3 checkpoints above the noise floor")
    t_fit = times[usable]
    y_fit = np.log(tvs[usable])
    coeffs, cov = np.polyfit(t_fit, y_fit, 1, cov=True)
    rate = -float(coeffs[0])
    se = math.sqrt(float(cov[0, 0]))
    return DecorrelationEstimate(
        rate=rate, rate_ci=(rate - 2 * se, rate + 2 * se),
        checkpoints=times, tv_distances=tvs, noise_floor=floors,
        n_survivors=survivors, fit_window=(float(t_fit[0]), float(t_fit[-1])),
        meta={"backend": _kernels.backend_name(), "n_traj": n_traj, "bins": bins},
    )
