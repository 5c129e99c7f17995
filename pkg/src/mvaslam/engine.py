"""Particle-based sum-product SLAM filter.

One time step runs: agent and feature prediction, a sequential update block
per physical anchor (measurement evaluation, loopy-BP data association,
agent / legacy-feature / new-feature updates, resampling, pruning), and a
final agent belief and estimate computation.

Map features are potential master virtual anchors (PMVAs): a particle cloud
over the MVA position plus a scalar existence probability.  New features
are proposed from each measurement by inverting the measurement map through
every agent particle; they become legacy features for the next anchor.

Per-particle weights and existence ratios are accumulated in the log domain
throughout; products over feature rows would underflow otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .association import AssociationInput, run_association
from .errors import DegenerateWeights
from .geometry import EPS_GEO, Surface, WallSegment, mva_to_va, va_to_mva
from .measurement import ClutterModel, MeasurementBatch, NoiseProfile, TWO_PI
from .raytrace import PathClass, hop_obstructed, line_crossing

_LOG_TINY = -745.0  # log of the smallest positive double
_DENOM_FLOOR = 1e-12


@dataclass
class HyperParams:
    """Filter hyperparameters; defaults follow the synthetic-experiment setup."""

    p_survival: float = 0.999
    p_detect_los: float = 0.95
    p_detect_single: float = 0.95
    p_detect_double: float = 0.95
    mu_clutter: float = 1.0
    mu_new: float = 0.05
    birth_region: tuple[tuple[float, float], tuple[float, float]] = ((-15.0, 15.0), (-15.0, 15.0))
    p_confirm: float = 0.5
    p_prune: float = 1e-3
    max_features: int = 30
    sigma_regularization: float = 1e-2
    sigma_accel: float = 9e-3
    dt: float = 1.0
    n_particles: int = 5000
    assoc_max_iters: int = 20
    assoc_tol: float = 1e-6
    use_double_bounce: bool = True
    visibility_check: bool = True
    use_batch_sigmas: bool = False
    eps_velocity: float = 1e-3
    # pair rows whose joint existence falls below this floor carry negligible
    # probability mass and are skipped for speed (0 disables the floor)
    pair_existence_floor: float = 3e-4

    def __post_init__(self):
        for name in ("p_survival", "p_detect_los", "p_detect_single", "p_detect_double",
                     "p_confirm", "p_prune"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.p_prune >= self.p_confirm:
            raise ValueError("pruning threshold must lie below the confirmation threshold")
        if min(self.sigma_regularization, self.sigma_accel, self.dt) <= 0:
            raise ValueError("noise scales and dt must be positive")
        if self.mu_clutter < 0 or self.mu_new < 0:
            raise ValueError("Poisson means must be non-negative")
        if self.n_particles < 1 or self.max_features < 1:
            raise ValueError("n_particles and max_features must be positive")
        (xlo, xhi), (ylo, yhi) = self.birth_region
        if not (xhi > xlo and yhi > ylo):
            raise ValueError("birth region must have positive area")

    def p_detect(self, kind: str) -> float:
        return getattr(self, f"p_detect_{kind}")

    @property
    def birth_area(self) -> float:
        (xlo, xhi), (ylo, yhi) = self.birth_region
        return (xhi - xlo) * (yhi - ylo)


@dataclass
class AgentBelief:
    """Weighted particle set over the agent state [px, py, vx, vy].

    ``headings`` carries each particle's last well-defined heading; it is
    refreshed from the velocity whenever the speed exceeds ``eps_velocity``.
    """

    particles: np.ndarray  # (I, 4)
    weights: np.ndarray    # (I,), sums to 1
    headings: np.ndarray   # (I,)

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


@dataclass
class PmvaBelief:
    """Potential MVA: equally-weighted position particles plus existence."""

    particles: np.ndarray  # (I, 2)
    existence: float
    id: int


@dataclass
class StepEstimate:
    """Per-step outputs: agent MMSE estimate and the confirmed map."""

    x_hat: np.ndarray            # (4,)
    mva_positions: np.ndarray    # (S_hat, 2)
    mva_ids: list[int]
    s_hat: int
    existence: dict[int, float] = field(default_factory=dict)


def ncv_matrices(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Nearly-constant-velocity discretization: x' = A x + B w."""
    a = np.array([[1.0, 0.0, dt, 0.0],
                  [0.0, 1.0, 0.0, dt],
                  [0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])
    b = np.array([[dt * dt / 2.0, 0.0],
                  [0.0, dt * dt / 2.0],
                  [dt, 0.0],
                  [0.0, dt]])
    return a, b


def systematic_resample(weights: np.ndarray, rng: np.random.Generator,
                        n: Optional[int] = None) -> np.ndarray:
    """Low-variance resampling: a single uniform offset strides the CDF."""
    weights = np.asarray(weights, dtype=float)
    n = weights.size if n is None else n
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions)


def _refresh_headings(velocities: np.ndarray, previous: np.ndarray, eps: float) -> np.ndarray:
    speed = np.hypot(velocities[:, 0], velocities[:, 1])
    return np.where(speed > eps, np.arctan2(velocities[:, 1], velocities[:, 0]), previous)


def initial_agent_belief(start_pos, params: HyperParams, rng: np.random.Generator,
                         pos_halfwidth: float = 0.5, vel_halfwidth: float = 0.1) -> AgentBelief:
    """Uniform prior box around the starting position with near-zero velocity."""
    n = params.n_particles
    start = np.asarray(start_pos, dtype=float)
    particles = np.empty((n, 4))
    particles[:, :2] = start + pos_halfwidth * (2.0 * rng.random((n, 2)) - 1.0)
    particles[:, 2:] = vel_halfwidth * (2.0 * rng.random((n, 2)) - 1.0)
    headings = _refresh_headings(particles[:, 2:], np.zeros(n), params.eps_velocity)
    return AgentBelief(particles=particles, weights=np.full(n, 1.0 / n), headings=headings)


def predict_agent(belief: AgentBelief, params: HyperParams, rng: np.random.Generator) -> AgentBelief:
    """Propagate every particle through the NCV model; weights unchanged."""
    a, b = ncv_matrices(params.dt)
    noise = params.sigma_accel * rng.standard_normal((belief.n_particles, 2))
    particles = belief.particles @ a.T + noise @ b.T
    headings = _refresh_headings(particles[:, 2:], belief.headings, params.eps_velocity)
    return AgentBelief(particles=particles, weights=belief.weights.copy(), headings=headings)


def predict_legacy(pmvas: Sequence[PmvaBelief], params: HyperParams,
                   rng: np.random.Generator) -> list[PmvaBelief]:
    """Survival-decay the existence and jitter the position particles."""
    out = []
    for f in pmvas:
        jitter = params.sigma_regularization * rng.standard_normal(f.particles.shape)
        out.append(PmvaBelief(particles=f.particles + jitter,
                              existence=params.p_survival * f.existence, id=f.id))
    return out


def draw_new_pmva(z_d: float, z_phi: float, sigma_d: float, sigma_phi: float,
                  agent: AgentBelief, pa, params: HyperParams,
                  rng: np.random.Generator, feature_id: int = -1) -> PmvaBelief:
    """Propose a new feature from one measurement.

    Per agent particle, the measurement (jittered by its noise) is inverted:
    the VA sits at distance z_d and bearing z_phi + heading from the agent;
    the MVA follows from the inverse single-bounce transform.  Degenerate
    inversions (VA at the anchor) are replaced by birth-region draws.
    Existence starts at zero; the new-feature update sets it.
    """
    pa = np.asarray(pa, dtype=float)
    n = agent.n_particles
    zd = z_d + sigma_d * rng.standard_normal(n)
    zphi = z_phi + sigma_phi * rng.standard_normal(n)
    theta = zphi + agent.headings
    va = agent.particles[:, :2] - zd[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    mva = va_to_mva(va, pa, strict=False)
    bad = ~np.all(np.isfinite(mva), axis=1)
    if np.any(bad):
        (xlo, xhi), (ylo, yhi) = params.birth_region
        draws = np.stack([xlo + (xhi - xlo) * rng.random(int(bad.sum())),
                          ylo + (yhi - ylo) * rng.random(int(bad.sum()))], axis=1)
        mva[bad] = draws
    return PmvaBelief(particles=mva, existence=0.0, id=feature_id)


# ---------------------------------------------------------------------------
# Per-anchor update block
# ---------------------------------------------------------------------------


@dataclass
class ExtentContext:
    """Reflector extents and blockage geometry used at inference time.

    Estimated surfaces are infinite lines; when scenario walls are supplied,
    each feature's line is clipped to the extent of the nearest true wall
    (endpoints projected onto the estimated line).  Blockage is tested only
    against declared blocker segments.
    """

    walls: tuple[WallSegment, ...] = ()
    blockers: tuple[WallSegment, ...] = ()
    clip_to_walls: bool = True

    def wall_mvas(self) -> np.ndarray:
        if not self.walls:
            return np.zeros((0, 2))
        return np.stack([Surface.from_segment(w.a, w.b).mva for w in self.walls])


def _log_sum_exp(values: np.ndarray) -> float:
    m = np.max(values)
    if not np.isfinite(m):
        return -np.inf
    return float(m + np.log(np.sum(np.exp(values - m))))


def _blocked(p, q, ctx: ExtentContext):
    if not ctx.blockers:
        return np.zeros(np.broadcast(np.asarray(p)[..., 0], np.asarray(q)[..., 0]).shape, dtype=bool)
    segments = [(w.a, w.b, None) for w in ctx.blockers]
    return hop_obstructed(p, q, segments)


class _FeatureGeometry:
    """Stacked per-particle surface lines of all features in one block.

    Shapes: particles (S, I, 2); normals/tangents (S, I, 2); offsets, validity
    and extent bounds (S, I).  Extents clip each estimated line to the
    nearest scenario wall (endpoints projected onto the line); without walls
    the reflector is infinite.
    """

    def __init__(self, features: Sequence[PmvaBelief], ctx: ExtentContext):
        self.count = len(features)
        if self.count == 0:
            return
        p = np.stack([f.particles for f in features])      # (S, I, 2)
        self.particles = p
        self.existence = np.array([f.existence for f in features])
        norm = np.hypot(p[..., 0], p[..., 1])
        self.ok = norm > EPS_GEO                           # (S, I)
        safe = np.where(self.ok, norm, 1.0)
        self.normal = p / safe[..., None]
        self.offset = 0.5 * norm
        self.tangent = np.stack([-self.normal[..., 1], self.normal[..., 0]], axis=-1)
        wall_mvas = ctx.wall_mvas()
        if wall_mvas.size:
            self.ext_lo = np.empty_like(self.offset)
            self.ext_hi = np.empty_like(self.offset)
            means = p.mean(axis=1)                          # (S, 2)
            for s in range(self.count):
                d = np.hypot(wall_mvas[:, 0] - means[s, 0], wall_mvas[:, 1] - means[s, 1])
                wall = ctx.walls[int(np.argmin(d))]
                ta = self.tangent[s] @ wall.a
                tb = self.tangent[s] @ wall.b
                self.ext_lo[s] = np.minimum(ta, tb) - EPS_GEO
                self.ext_hi[s] = np.maximum(ta, tb) + EPS_GEO
        else:
            self.ext_lo = None
            self.ext_hi = None

    def extent_ok(self, hit, tangent, lo, hi):
        if lo is None:
            return np.ones(hit.shape[:-1], dtype=bool)
        tau = np.sum(hit * tangent, axis=-1)
        return (tau >= lo) & (tau <= hi)


def _single_block(agent_xy, pa, geo: _FeatureGeometry, ctx):
    """VA positions (S, I, 2) and availability (S, I) of single-bounce rows."""
    va = mva_to_va(geo.particles, pa, strict=False)
    va = np.where(geo.ok[..., None], va, 0.0)
    crossed, w = line_crossing(agent_xy[None], va, geo.normal, geo.offset)
    avail = geo.ok & crossed
    avail &= geo.extent_ok(w, geo.tangent, geo.ext_lo, geo.ext_hi)
    avail &= ~_blocked(agent_xy[None], w, ctx)
    avail &= ~_blocked(w, pa, ctx)
    return va, avail


def _double_block(agent_xy, pa, va_single, geo: _FeatureGeometry, ctx, first, second):
    """VA positions and availability of the active ordered pairs, gathered.

    ``first`` / ``second`` index the agent-side and anchor-side surfaces of
    each active pair row; all outputs have leading shape (n_pairs, I).
    """
    va1 = va_single[second]                                 # anchor-side images
    va2 = mva_to_va(geo.particles[first], va1, strict=False)
    ok = geo.ok[first] & geo.ok[second]
    va2 = np.where(ok[..., None], va2, 0.0)
    crossed1, w1 = line_crossing(agent_xy[None], va2, geo.normal[first], geo.offset[first])
    avail = ok & crossed1
    lo1 = geo.ext_lo[first] if geo.ext_lo is not None else None
    hi1 = geo.ext_hi[first] if geo.ext_hi is not None else None
    avail &= geo.extent_ok(w1, geo.tangent[first], lo1, hi1)
    crossed2, w2 = line_crossing(w1, va1, geo.normal[second], geo.offset[second])
    avail &= crossed2
    lo2 = geo.ext_lo[second] if geo.ext_lo is not None else None
    hi2 = geo.ext_hi[second] if geo.ext_hi is not None else None
    avail &= geo.extent_ok(w2, geo.tangent[second], lo2, hi2)
    avail &= ~_blocked(agent_xy[None], w1, ctx)
    avail &= ~_blocked(w1, w2, ctx)
    avail &= ~_blocked(w2, pa, ctx)
    return va2, avail


def _block_likelihood(agent_xy, headings, va, avail, z, sigma_d, sigma_phi,
                      out_dtype=np.float64):
    """Availability-masked likelihood (..., I, M) of a block of rows.

    The double-bounce block requests float32 output; the distance and angle
    grids are cast up front so no full-size float64 temporary is formed.
    """
    diff = agent_xy - va
    d = np.hypot(diff[..., 0], diff[..., 1])
    phi = np.arctan2(diff[..., 1], diff[..., 0]) - headings
    valid = (d > EPS_GEO) & avail
    if out_dtype != np.float64:
        d = d.astype(out_dtype)
        phi = phi.astype(out_dtype)
        z = z.astype(out_dtype)
        sigma_d = sigma_d.astype(out_dtype)
        sigma_phi = sigma_phi.astype(out_dtype)
    dphi = z[:, 1] - phi[..., None]
    # inputs lie in (-3 pi, 3 pi): two conditional shifts wrap to [-pi, pi]
    two_pi = out_dtype(2.0 * np.pi)
    dphi -= two_pi * (dphi > out_dtype(np.pi))
    dphi += two_pi * (dphi < out_dtype(-np.pi))
    dphi /= sigma_phi
    dd = (z[:, 0] - d[..., None]) / sigma_d
    # single fused exponential; the bivariate normalizer is factored out front
    lik = dd * dd
    lik += dphi * dphi
    lik *= out_dtype(-0.5)
    np.exp(lik, out=lik)
    lik /= (TWO_PI * sigma_d * sigma_phi)
    lik *= valid[..., None]
    return lik


def process_pa(agent: AgentBelief, log_weights: np.ndarray,
               legacy: list[PmvaBelief], new_from_prev: list[PmvaBelief],
               batch: MeasurementBatch, pa, params: HyperParams,
               profile: NoiseProfile, clutter: ClutterModel,
               rng: np.random.Generator, ctx: ExtentContext,
               next_id: list[int]) -> tuple[np.ndarray, list[PmvaBelief], list[PmvaBelief]]:
    """One anchor's update block.

    Stacks the previous anchor's new features as legacy, proposes new
    features from this anchor's measurements, evaluates all candidate-path
    rows (LOS, one single-bounce row per feature, ordered double-bounce
    rows per feature pair), runs data association, and applies the agent,
    legacy-feature, and new-feature updates with per-feature resampling and
    pruning.  Returns the updated agent log-weights and the surviving
    legacy and new feature lists.
    """
    pa = np.asarray(pa, dtype=float)
    legacy = list(legacy) + list(new_from_prev)
    s_count = len(legacy)
    n_meas = len(batch)
    agent_xy = agent.particles[:, :2]
    n_part = agent.n_particles
    z = batch.z.reshape(n_meas, 2)
    use_doubles = params.use_double_bounce and s_count > 1

    denom = np.maximum(params.mu_clutter * clutter.density, _DENOM_FLOOR) * np.ones(max(n_meas, 1))
    if params.use_batch_sigmas and n_meas:
        sig_d = {k: batch.sigma_d for k in ("los", "single", "double")}
        sig_phi = {k: batch.sigma_phi for k in ("los", "single", "double")}
    else:
        sig_d = {k: np.full(n_meas, getattr(profile, k).sigma_d) for k in ("los", "single", "double")}
        sig_phi = {k: np.full(n_meas, getattr(profile, k).sigma_phi) for k in ("los", "single", "double")}

    # new-feature proposals, one per measurement
    proposals = []
    for m in range(n_meas):
        proposals.append(draw_new_pmva(
            float(z[m, 0]), float(z[m, 1]),
            float(sig_d["single"][m]), float(sig_phi["single"][m]),
            agent, pa, params, rng, feature_id=next_id[0]))
        next_id[0] += 1

    # availability and likelihood per block
    geo = _FeatureGeometry(legacy, ctx)
    los_avail = ~_blocked(agent_xy, pa, ctx)
    if not params.visibility_check:
        los_avail = np.ones(n_part, dtype=bool)
    lik_los = _block_likelihood(agent_xy, agent.headings, pa, los_avail,
                                z, sig_d["los"], sig_phi["los"])
    if s_count:
        pe = geo.existence
        va_s, avail_s = _single_block(agent_xy, pa, geo, ctx)
        if not params.visibility_check:
            avail_s = geo.ok
        lik_s = _block_likelihood(agent_xy[None], agent.headings[None], va_s, avail_s,
                                  z, sig_d["single"], sig_phi["single"])
    if use_doubles:
        pair_mask = ~np.eye(s_count, dtype=bool)
        if params.pair_existence_floor > 0:
            pair_mask &= pe[:, None] * pe[None, :] >= params.pair_existence_floor
        pair_first, pair_second = np.nonzero(pair_mask)
        use_doubles = pair_first.size > 0
    if use_doubles:
        va_d, avail_d = _double_block(agent_xy, pa, va_s, geo, ctx, pair_first, pair_second)
        if not params.visibility_check:
            avail_d = geo.ok[pair_first] & geo.ok[pair_second]
        lik_d = _block_likelihood(agent_xy[None], agent.headings[None],
                                  va_d, avail_d, z, sig_d["double"], sig_phi["double"],
                                  out_dtype=np.float32)

    # birth-density values of the proposal clouds
    (xlo, xhi), (ylo, yhi) = params.birth_region
    f_birth = np.empty((n_meas, n_part))
    for m, prop in enumerate(proposals):
        p = prop.particles
        inside = (p[:, 0] >= xlo) & (p[:, 0] <= xhi) & (p[:, 1] >= ylo) & (p[:, 1] <= yhi)
        f_birth[m] = inside / params.birth_area

    # evidence tables: row order is LOS, singles, active ordered double pairs
    n_rows = 1 + s_count + (pair_first.size if use_doubles else 0)
    beta = np.empty((n_rows, n_meas + 1))
    p_dl, p_ds, p_dd = params.p_detect_los, params.p_detect_single, params.p_detect_double
    beta[0, 0] = float(np.mean(1.0 - los_avail * p_dl))
    if n_meas:
        beta[0, 1:] = p_dl * lik_los.sum(axis=0) / n_part / denom
    if s_count:
        beta[1:1 + s_count, 0] = pe * np.mean(1.0 - avail_s * p_ds, axis=1) + (1.0 - pe)
        if n_meas:
            beta[1:1 + s_count, 1:] = (pe[:, None] * p_ds
                                       * lik_s.sum(axis=1) / n_part / denom[None, :])
    if use_doubles:
        pe_pair = pe[pair_first] * pe[pair_second]
        beta[1 + s_count:, 0] = pe_pair * np.mean(1.0 - avail_d * p_dd, axis=1) + (1.0 - pe_pair)
        if n_meas:
            sums_d = lik_d.sum(axis=1, dtype=np.float64)
            beta[1 + s_count:, 1:] = pe_pair[:, None] * p_dd * sums_d / n_part / denom[None, :]
    xi = np.ones((n_meas, n_rows + 1))
    if n_meas:
        xi[:, 0] = 1.0 + params.mu_new * f_birth.mean(axis=1) / denom
    assoc = run_association(AssociationInput(beta=beta, xi=xi),
                            max_iters=params.assoc_max_iters, tol=params.assoc_tol)
    eta = assoc.eta
    sigma_msg = assoc.sigma_out

    # per-row responses: eta-weighted likelihood mixtures, one per particle
    if n_meas:
        resp_los = p_dl * lik_los @ (eta[0, 1:] / denom) + eta[0, 0] * (1.0 - los_avail * p_dl)
    else:
        resp_los = eta[0, 0] * (1.0 - los_avail * p_dl)
    if s_count:
        eta_s = eta[1:1 + s_count]
        resp_s = eta_s[:, 0, None] * (1.0 - avail_s * p_ds)
        if n_meas:
            resp_s = resp_s + p_ds * np.einsum("sim,sm->si", lik_s, eta_s[:, 1:] / denom[None, :])
    if use_doubles:
        eta_d = eta[1 + s_count:]
        resp_d = eta_d[:, 0, None] * (1.0 - avail_d * p_dd)
        if n_meas:
            eta_dm = (eta_d[:, 1:] / denom[None, :]).astype(np.float32)
            resp_d = resp_d + p_dd * np.einsum("rim,rm->ri", lik_d, eta_dm)

    # agent update: product of all row messages (log domain)
    with np.errstate(divide="ignore"):
        log_weights = log_weights + np.log(np.maximum(resp_los, 0.0))
        if s_count:
            gam_s = pe[:, None] * resp_s + eta_s[:, 0, None] * (1.0 - pe[:, None])
            log_weights = log_weights + np.log(np.maximum(gam_s, 0.0)).sum(axis=0)
        if use_doubles:
            gam_d = pe_pair[:, None] * resp_d + eta_d[:, 0, None] * (1.0 - pe_pair[:, None])
            log_weights = log_weights + np.log(np.maximum(gam_d, 0.0)).sum(axis=0)
    if not np.any(np.isfinite(log_weights)):
        raise DegenerateWeights("agent particle weights underflowed during a PA block")

    # legacy update: per feature, the updated particle weight is the product
    # of the single-bounce message and every double-bounce message the
    # feature participates in; the existence ratio uses the same product
    # for the nonexistence mass
    updated_legacy: list[PmvaBelief] = []
    if s_count:
        with np.errstate(divide="ignore"):
            log_g1 = np.log(np.maximum(resp_s, 0.0))                        # (S, I)
            log_g0 = np.log(np.maximum(eta_s[:, 0], 1e-300))                # (S,)
            if use_doubles:
                # message from row (s, t) to its first feature s uses the
                # second feature's existence, and vice versa; one-hot
                # selectors turn the per-row sums into matrix products
                pe_f = pe[pair_first][:, None]
                pe_t = pe[pair_second][:, None]
                eta_d0 = eta_d[:, 0][:, None]
                log_first = np.log(np.maximum(pe_t * resp_d + eta_d0 * (1.0 - pe_t), 0.0))
                log_second = np.log(np.maximum(pe_f * resp_d + eta_d0 * (1.0 - pe_f), 0.0))
                sel_first = (pair_first == np.arange(s_count)[:, None]).astype(float)
                sel_second = (pair_second == np.arange(s_count)[:, None]).astype(float)
                log_g1 = log_g1 + sel_first @ log_first + sel_second @ log_second
                log_eta0 = np.log(np.maximum(eta_d[:, 0], 1e-300))
                log_g0 = log_g0 + sel_first @ log_eta0 + sel_second @ log_eta0
        for s, feat in enumerate(legacy):
            lse = _log_sum_exp(log_g1[s])
            if np.isfinite(lse):
                log_mass1 = (math.log(feat.existence) if feat.existence > 0 else -np.inf) \
                    + lse - math.log(n_part)
                log_mass0 = (math.log1p(-feat.existence) if feat.existence < 1 else -np.inf) \
                    + log_g0[s]
                top = max(log_mass1, log_mass0)
                existence = (math.exp(log_mass1 - top)
                             / (math.exp(log_mass1 - top) + math.exp(log_mass0 - top)))
                w = np.exp(log_g1[s] - lse)
                idx = systematic_resample(w / w.sum(), rng)
                particles = feat.particles[idx]
            else:
                existence = 0.0
                particles = feat.particles
            updated_legacy.append(PmvaBelief(particles=particles, existence=existence, id=feat.id))

    # new-feature update: existence from the unclaimed-measurement message
    updated_new: list[PmvaBelief] = []
    for m, prop in enumerate(proposals):
        num = sigma_msg[m, 0] * params.mu_new * float(f_birth[m].mean()) / denom[m]
        existence = num / (1.0 + num)
        weights = f_birth[m]
        total = weights.sum()
        if total > 0:
            idx = systematic_resample(weights / total, rng)
            particles = prop.particles[idx]
        else:
            existence = 0.0
            particles = prop.particles
        updated_new.append(PmvaBelief(particles=particles, existence=existence, id=prop.id))

    updated_legacy = [f for f in updated_legacy if f.existence >= params.p_prune]
    updated_new = [f for f in updated_new if f.existence >= params.p_prune]
    overflow = len(updated_legacy) + len(updated_new) - params.max_features
    if overflow > 0:
        ranked = sorted(updated_legacy + updated_new, key=lambda f: (-f.existence, f.id))
        keep = {f.id for f in ranked[:params.max_features]}
        updated_legacy = [f for f in updated_legacy if f.id in keep]
        updated_new = [f for f in updated_new if f.id in keep]
    return log_weights, updated_legacy, updated_new


def finalize_step(agent: AgentBelief, log_weights: np.ndarray,
                  features: Sequence[PmvaBelief], params: HyperParams,
                  rng: np.random.Generator) -> tuple[AgentBelief, StepEstimate]:
    """Normalize the accumulated agent weights, estimate, and resample."""
    lse = _log_sum_exp(log_weights)
    if not np.isfinite(lse):
        raise DegenerateWeights("all agent particle weights are zero")
    weights = np.exp(log_weights - lse)
    weights /= weights.sum()
    x_hat = weights @ agent.particles

    idx = systematic_resample(weights, rng)
    particles = agent.particles[idx]
    headings = _refresh_headings(particles[:, 2:], agent.headings[idx], params.eps_velocity)
    resampled = AgentBelief(particles=particles,
                            weights=np.full(agent.n_particles, 1.0 / agent.n_particles),
                            headings=headings)

    confirmed = [f for f in features if f.existence > params.p_confirm]
    positions = (np.stack([f.particles.mean(axis=0) for f in confirmed])
                 if confirmed else np.zeros((0, 2)))
    estimate = StepEstimate(x_hat=x_hat,
                            mva_positions=positions,
                            mva_ids=[f.id for f in confirmed],
                            s_hat=len(confirmed),
                            existence={f.id: f.existence for f in features})
    return resampled, estimate


class SlamFilter:
    """Stateful per-step driver around the prediction / update operations."""

    def __init__(self, pas, params: HyperParams, profile: NoiseProfile,
                 clutter: ClutterModel, rng: np.random.Generator,
                 start_pos, extent_walls: Sequence[WallSegment] = (),
                 blockers: Sequence[WallSegment] = ()):
        self.pas = [np.asarray(p, dtype=float) for p in pas]
        self.params = params
        self.profile = profile
        self.clutter = clutter
        self.rng = rng
        self.agent = initial_agent_belief(start_pos, params, rng)
        self.features: list[PmvaBelief] = []
        self.ctx = ExtentContext(walls=tuple(extent_walls), blockers=tuple(blockers),
                                 clip_to_walls=bool(extent_walls))
        self._next_id = [0]

    def step(self, batches: Sequence[MeasurementBatch]) -> StepEstimate:
        """Advance one time step with one measurement batch per anchor."""
        if len(batches) != len(self.pas):
            raise ValueError("one measurement batch per anchor is required")
        self.agent = predict_agent(self.agent, self.params, self.rng)
        legacy = predict_legacy(self.features, self.params, self.rng)
        new_feats: list[PmvaBelief] = []
        log_weights = np.zeros(self.agent.n_particles)
        for pa, batch in zip(self.pas, batches):
            log_weights, legacy, new_feats = process_pa(
                self.agent, log_weights, legacy, new_feats, batch, pa,
                self.params, self.profile, self.clutter, self.rng, self.ctx,
                self._next_id)
        self.features = legacy + new_feats
        self.agent, estimate = finalize_step(self.agent, log_weights, self.features,
                                             self.params, self.rng)
        return estimate
