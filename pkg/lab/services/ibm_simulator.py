# lab/services/ibm_simulator.py
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from lab.exceptions import (
    AlphaOutOfRange,
    ResourceClampTooFrequent,
    ResourceNegative,
    StepTooLarge,
)
from lab.services.coefficients import build_coefficients
from lab.services.initial_conditions import InitialLaw
from lab.services.kernels import FragmentationKernel
from lab.services.measure_metrics import EmpiricalMeasure
from lab.services.random_streams import INITIAL_STREAM, ibm_stream, substream

logger = logging.getLogger(__name__)

# dt * (|b| + |d|) above this makes the splitting bias visible
SPLITTING_GUARD = 0.1
CLAMP_FRACTION_LIMIT = 1e-6


@dataclass(frozen=True, eq=False)
class Population:
    """Individuals of mass 1/K each, with cumulative event counters."""
    traits: np.ndarray
    capacity: int
    births: int = 0
    deaths: int = 0

    @property
    def size(self):
        return len(self.traits)

    @property
    def mass(self):
        return self.size / self.capacity

    def measure(self):
        return EmpiricalMeasure(self.traits, self.capacity)


@dataclass(frozen=True)
class ResourceState:
    value: float
    r_bar: float
    clamped: int = 0


@dataclass
class IbmSummary:
    """Per-step streaming statistics."""
    time: np.ndarray
    mass: np.ndarray
    moment1: np.ndarray
    moment2: np.ndarray
    resource: np.ndarray
    births: np.ndarray
    deaths: np.ndarray
    histogram: np.ndarray
    histogram_edges: np.ndarray


@dataclass
class IbmTrajectory:
    times: np.ndarray
    snapshots: list
    resources: np.ndarray
    summary: IbmSummary
    seed: int
    capacity: int
    clamp_count: int = 0
    metadata: dict = field(default_factory=dict)

    def snapshot_at(self, t):
        index = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[index], float(self.resources[index])

    def series(self):
        s = self.summary
        return {
            "time": s.time, "mass": s.mass, "moment1": s.moment1, "resource": s.resource,
            "moment2": s.moment2, "births": s.births, "deaths": s.deaths,
        }


def split_trait(x, alpha):
    """Mother keeps alpha*x, the daughter takes the rest."""
    alpha_arr = np.asarray(alpha, dtype=float)
    if np.any(alpha_arr <= 0.0) or np.any(alpha_arr >= 1.0):
        raise AlphaOutOfRange(f"division fraction must lie in (0, 1), got {alpha}")
    x_arr = np.asarray(x, dtype=float)
    mother = alpha_arr * x_arr
    daughter = x_arr - mother
    if mother.ndim == 0:
        return float(mother), float(daughter)
    return mother, daughter


def check_step(c, dt):
    load = dt * (c.bounds.birth_sup + c.bounds.death_sup)
    if load > SPLITTING_GUARD:
        logger.error(f"❌ IBM step too large: dt*(|b|+|d|) = {load:.4g}")
        raise StepTooLarge(
            f"dt*(|b|+|d|) = {load:.4g} exceeds {SPLITTING_GUARD}; reduce numerics.dt_ibm"
        )


def resource_drift(pop, res, c):
    """r_in - R - (1/K) sum_i chi(x_i, R)."""
    consumption = float(c.chi_at(pop.traits, res.value).sum()) / pop.capacity if pop.size else 0.0
    return c.r_in - res.value - consumption


def _exponential_clock(rng, rates):
    draws = rng.standard_exponential(len(rates))
    safe = np.where(rates > 0, rates, 1.0)
    return np.where(rates > 0, draws / safe, np.inf)


def apply_events(traits, divides, dies, alphas):
    """New trait array after divisions (daughters appended) and deaths."""
    mothers, daughters = split_trait(traits[divides], alphas) if divides.any() else (np.empty(0), np.empty(0))
    updated = traits.copy()
    updated[divides] = mothers
    return np.concatenate([updated[~dies], daughters])


def ibm_step(pop, res, c, kernel, dt, rng):
    """One operator-split step: trait SDE, demographic events, resource."""
    check_step(c, dt)
    r = res.value
    drift = resource_drift(pop, res, c)
    births = deaths = 0
    traits = pop.traits

    if pop.size:
        noise = rng.standard_normal(pop.size)
        zeta = c.zeta_at(traits, r)
        diffusion = np.maximum(c.diff_at(traits, r), 0.0)
        traits = np.maximum(0.0, traits + zeta * dt + np.sqrt(2.0 * diffusion) * math.sqrt(dt) * noise)

        birth_clock = _exponential_clock(rng, c.birth_at(traits, r))
        death_clock = _exponential_clock(rng, c.death_at(traits))
        divides = (birth_clock < dt) & (birth_clock < death_clock)
        dies = (death_clock < dt) & (death_clock <= birth_clock)
        alphas = kernel.sample(rng, int(divides.sum()))
        traits = apply_events(traits, divides, dies, alphas)
        births, deaths = int(divides.sum()), int(dies.sum())

    updated = r + dt * drift
    clamped = res.clamped
    if updated < 0.0 or updated > res.r_bar:
        clamped += 1
        logger.warning(f"⚠️ Resource clamp at R={updated:.6g}")
        updated = min(max(updated, 0.0), res.r_bar)
    if updated < 0.0:
        raise ResourceNegative(f"resource {updated} below zero after clamp")

    population = Population(traits, pop.capacity, pop.births + births, pop.deaths + deaths)
    return population, ResourceState(updated, res.r_bar, clamped)


def _summarize(pop, res, edges):
    x = pop.traits
    counts, _ = np.histogram(np.minimum(x, edges[-1]), bins=edges)
    return (
        pop.mass,
        float(x.sum()) / pop.capacity,
        float((x ** 2).sum()) / pop.capacity,
        res.value,
        counts,
    )


def simulate_ibm(config, seed, capacity=None, coefficients=None, kernel=None):
    """Run the individual-based model for one (K, seed) pair."""
    capacity = int(capacity or config.experiment.k_values[0])
    numerics = config.numerics
    c = coefficients or build_coefficients(config.model, numerics.x_max, config.r_bar)
    kernel = kernel or FragmentationKernel.from_config(config.kernel, numerics.n_quad)
    rng = ibm_stream(config.experiment.run_seed, capacity, seed)

    horizon = config.experiment.horizon
    n_steps = config.ibm_step_count
    dt = horizon / n_steps
    check_step(c, dt)

    law = InitialLaw.from_config(config.initial)
    n0 = int(math.floor(config.initial.mass * capacity))
    initial_rng = substream(config.experiment.run_seed, INITIAL_STREAM, capacity, seed)
    pop = Population(law.sample(initial_rng, n0), capacity)
    res = ResourceState(float(config.initial.resource), config.r_bar)

    snapshot_times = sorted(set([0.0, *config.experiment.snapshot_times, horizon]))
    # times that round to one step share its population
    snapshot_steps = {}
    for t in snapshot_times:
        snapshot_steps.setdefault(int(round(t / dt)), []).append(t)
    edges = np.linspace(0.0, numerics.x_max, numerics.summary_bins + 1)

    rows = [_summarize(pop, res, edges)]
    step_births = [0]
    step_deaths = [0]
    snapshots, snap_resources, snap_times = [], [], []
    for t in snapshot_steps.get(0, []):
        snapshots.append(pop)
        snap_resources.append(res.value)
        snap_times.append(t)

    logger.info(f"🔄 IBM run K={capacity} seed={seed}: {n0} individuals, {n_steps} steps")
    for step in range(1, n_steps + 1):
        before_births, before_deaths = pop.births, pop.deaths
        pop, res = ibm_step(pop, res, c, kernel, dt, rng)
        rows.append(_summarize(pop, res, edges))
        step_births.append(pop.births - before_births)
        step_deaths.append(pop.deaths - before_deaths)
        for t in snapshot_steps.get(step, []):
            snapshots.append(pop)
            snap_resources.append(res.value)
            snap_times.append(t)

    if res.clamped / n_steps > CLAMP_FRACTION_LIMIT:
        logger.error(f"❌ Resource clamp fired in {res.clamped} of {n_steps} steps")
        raise ResourceClampTooFrequent(
            f"resource clamp fired in {res.clamped} of {n_steps} steps"
        )

    summary = IbmSummary(
        time=np.arange(n_steps + 1) * dt,
        mass=np.array([r[0] for r in rows]),
        moment1=np.array([r[1] for r in rows]),
        moment2=np.array([r[2] for r in rows]),
        resource=np.array([r[3] for r in rows]),
        births=np.array(step_births),
        deaths=np.array(step_deaths),
        histogram=np.array([r[4] for r in rows]),
        histogram_edges=edges,
    )
    logger.info(f"✅ IBM run K={capacity} seed={seed} done: {pop.size} individuals, "
                f"{pop.births} births, {pop.deaths} deaths")
    return IbmTrajectory(
        times=np.array(snap_times),
        snapshots=snapshots,
        resources=np.array(snap_resources),
        summary=summary,
        seed=int(seed),
        capacity=capacity,
        clamp_count=res.clamped,
        metadata={"dt": dt, "n_steps": n_steps, "initial_size": n0},
    )


def mass_moment_track(traj, p):
    """<nu_t^K, 1 + x^p> at every snapshot time."""
    return np.array([
        float((1.0 + snap.traits ** p).sum()) / snap.capacity for snap in traj.snapshots
    ])
