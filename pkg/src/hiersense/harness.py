"""Experiment orchestration: trial worlds, the frame loop, fading evaluation.

A trial owns one topology realization and one exogenous occupancy/sensing
history; every scheme and every grid point replays that same history, so
scheme comparisons are paired.  RNG streams are derived from
(master seed, trial index, grid index, ...) seed sequences, which makes runs
reproducible regardless of execution order.

Two evaluation modes: ``analytic_lb`` scores each frame's committed traffic
with the closed-form throughput bound evaluated at the true network state,
while ``fading_mc`` draws per-user Rayleigh channels and counts SINR
threshold successes at the actual user positions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import control
from .aggregation import HierarchicalExchange
from .dynamics import (OccupancyModel, PopulationModel,
                       sample_steady_state, sample_su_population, step_occupancy)
from .hierarchy import AggregationTree, build_ibt, build_random_tree
from .inference import (DelayCompensatedWeights, compute_weights, estimate_ip,
                        estimate_is_hierarchical, estimate_is_oracle)
from .sensing import SensorModel, posterior_update, prior_propagate, \
    sample_detection_count
from .topology import (InterferenceMatrix, NetworkTopology, PathlossParams,
                       build_topology, compute_phi, db_to_lin, lin_to_db,
                       pathloss_db)

SCHEME_KINDS = ("ibt", "rt", "full_nsi", "radius_nsi", "uncoordinated",
                "consensus")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeSpec:
    """One control scheme in a sweep; unused knobs are ignored per kind."""

    name: str
    kind: str
    gamma_delay: float = 0.0
    c_max: float = math.inf
    radius: float = math.inf
    degree: int = 5
    rounds: int = 10

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ConfigError(f"schemes[].kind: unknown kind {self.kind!r}")
        if self.gamma_delay < 0:
            raise ConfigError("schemes[].gamma_delay: must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    topology_kind: str = "grid"
    n_cells: int = 64
    area: tuple[float, float] = (800.0, 800.0)
    n_blockages: int = 0
    cell_radius: float | None = None
    pathloss: PathlossParams = field(default_factory=PathlossParams)
    nu1: float = 0.005
    nu0: float = 0.095
    mu: float | None = None
    pi_b: float | None = None
    eps_f: float = 0.0
    eps_m: float = 0.0
    population_mode: str = "dense"
    m_per_cell: int = 10
    a_max: float | None = None
    sinr_th_db: float = 5.0
    schemes: tuple[SchemeSpec, ...] = ()
    lambda_grid: tuple[float, ...] = (1.0,)
    ptx_grid: tuple[float, ...] = (0.01,)
    frames: int = 300
    trials: int = 20
    master_seed: int = 1
    eval_mode: str = "analytic_lb"
    is_mode: str = "oracle"
    extra_warmup: int = 0
    hop_distance_m: float | None = None

    # ------------------------------------------------------------- validation

    def validate(self) -> None:
        errors = []
        if self.topology_kind not in ("grid", "random"):
            errors.append("topology_kind: must be 'grid' or 'random'")
        if self.frames < 1:
            errors.append("frames: must be >= 1")
        if self.trials < 1:
            errors.append("trials: must be >= 1")
        if self.extra_warmup < 0:
            errors.append("extra_warmup: must be >= 0")
        if not self.schemes:
            errors.append("schemes: at least one scheme is required")
        names = [s.name for s in self.schemes]
        if len(set(names)) != len(names):
            errors.append("schemes: names must be unique")
        needs_lambda = any(s.kind != "uncoordinated" for s in self.schemes)
        needs_ptx = any(s.kind == "uncoordinated" for s in self.schemes)
        if needs_lambda and not self.lambda_grid:
            errors.append("lambda_grid: must be non-empty")
        if needs_ptx and not self.ptx_grid:
            errors.append("ptx_grid: must be non-empty")
        if any(l <= 0 for l in self.lambda_grid):
            errors.append("lambda_grid: entries must be positive")
        if any(not 0 <= p <= 1 for p in self.ptx_grid):
            errors.append("ptx_grid: entries must lie in [0, 1]")
        if self.nu1 + self.nu0 <= 0:
            errors.append("occupancy: nu1 + nu0 must be positive")
        try:
            self.occupancy_model()
        except ValueError as exc:
            errors.append(f"occupancy: {exc}")
        try:
            self.sensor_model()
        except ValueError as exc:
            errors.append(f"sensing: {exc}")
        if self.eval_mode not in ("analytic_lb", "fading_mc"):
            errors.append("eval_mode: must be 'analytic_lb' or 'fading_mc'")
        if self.is_mode not in ("oracle", "hierarchical"):
            errors.append("is_mode: must be 'oracle' or 'hierarchical'")
        if self.eval_mode == "fading_mc":
            if self.population_mode != "constant":
                errors.append("eval_mode: fading_mc needs a constant population "
                              "(per-user access draws)")
            if self.topology_kind == "grid" and self.n_blockages > 0:
                errors.append("eval_mode: fading_mc with blockages is not modeled")
        try:
            PopulationModel(self.population_mode, self.m_per_cell)
        except ValueError as exc:
            errors.append(f"population: {exc}")
        if errors:
            raise ConfigError("; ".join(errors))

    # ---------------------------------------------------------------- derived

    def occupancy_model(self) -> OccupancyModel:
        return OccupancyModel(self.nu1, self.nu0, mu=self.mu, pi_b=self.pi_b)

    def sensor_model(self) -> SensorModel:
        return SensorModel(self.eps_f, self.eps_m)

    def sinr_th_linear(self) -> float:
        return float(db_to_lin(self.sinr_th_db))

    def resolved_a_max(self) -> float:
        if self.a_max is not None:
            return float(self.a_max)
        # rail for the dense regime: ten times the expected active-PU load
        return 10.0 * float(self.occupancy_model().pi_b)

    def resolved_hop_distance(self) -> float:
        if self.hop_distance_m is not None:
            return float(self.hop_distance_m)
        return float(self.area[0]) / math.sqrt(self.n_cells)

    # ------------------------------------------------------------------- I/O

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        topo = raw.get("topology", {})
        occ = raw.get("occupancy", {})
        sen = raw.get("sensing", {})
        pop = raw.get("population", {})
        ctl = raw.get("control", {})
        exp = raw.get("experiment", {})
        pl = raw.get("pathloss", {})
        schemes = tuple(SchemeSpec(**{k: _maybe_inf(v) for k, v in s.items()})
                        for s in raw.get("schemes", ()))
        area = topo.get("area", (800.0, 800.0))
        return cls(
            topology_kind=topo.get("kind", "grid"),
            n_cells=int(topo.get("n_cells", 64)),
            area=(float(area[0]), float(area[1])),
            n_blockages=int(topo.get("n_blockages", 0)),
            cell_radius=topo.get("cell_radius"),
            pathloss=PathlossParams(**pl),
            nu1=float(occ.get("nu1", 0.005)),
            nu0=float(occ.get("nu0", 0.095)),
            mu=occ.get("mu"),
            pi_b=occ.get("pi_b"),
            eps_f=float(sen.get("eps_f", 0.0)),
            eps_m=float(sen.get("eps_m", 0.0)),
            population_mode=pop.get("mode", "dense"),
            m_per_cell=int(pop.get("m", 10)),
            a_max=pop.get("a_max"),
            sinr_th_db=float(ctl.get("sinr_th_db", 5.0)),
            schemes=schemes,
            lambda_grid=tuple(float(x) for x in exp.get("lambda_grid", (1.0,))),
            ptx_grid=tuple(float(x) for x in exp.get("ptx_grid", (0.01,))),
            frames=int(exp.get("frames", 300)),
            trials=int(exp.get("trials", 20)),
            master_seed=int(exp.get("master_seed", 1)),
            eval_mode=exp.get("eval_mode", "analytic_lb"),
            is_mode=exp.get("is_mode", "oracle"),
            extra_warmup=int(exp.get("extra_warmup", 0)),
            hop_distance_m=exp.get("hop_distance_m"),
        )


def _maybe_inf(v):
    if isinstance(v, str) and v.lower() in ("inf", ".inf", "infinity"):
        return math.inf
    return v


def _seed_rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def _seed_int(*entropy) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


# ----------------------------------------------------------------------------
# Per-trial world and per-scheme runtime state


@dataclass
class FadingLayout:
    """Per-user geometry and linear pathloss blocks for the realistic mode."""

    su_cell: np.ndarray       # (n_su,) owning cell of each SU
    pl_su_su: np.ndarray      # (n_su, n_su) SU tx -> SU rx
    pl_pu_su: np.ndarray      # (n_pu, n_su) PU tx -> SU rx
    pl_su_pu: np.ndarray      # (n_su, n_pu) SU tx -> PU rx
    pl_pu_pu: np.ndarray      # (n_pu, n_pu) PU tx -> PU rx


@dataclass
class SchemeRuntime:
    spec: SchemeSpec
    tree: AggregationTree | None = None
    weights: DelayCompensatedWeights | None = None
    weights_uncomp: DelayCompensatedWeights | None = None
    delay_matrix: np.ndarray | None = None
    w_within: np.ndarray | None = None
    w_beyond: np.ndarray | None = None
    mixer: np.ndarray | None = None
    warmup: int = 0
    agg_cost_per_cell: float = 0.0


@dataclass
class TrialContext:
    config: ExperimentConfig
    trial: int
    topology: NetworkTopology
    phi: InterferenceMatrix
    coupling: np.ndarray
    phi_diag: np.ndarray
    model: OccupancyModel
    sensor: SensorModel
    m: np.ndarray
    runtimes: list[SchemeRuntime]
    warmup: int
    t_total: int
    b_seq: np.ndarray
    bhat_seq: np.ndarray
    fading: FadingLayout | None


def _simulate_occupancy(model, n_cells, t_total, rng) -> np.ndarray:
    state = sample_steady_state(model, n_cells, rng)
    rows = [state.b]
    for _ in range(t_total - 1):
        state = step_occupancy(model, state, rng)
        rows.append(state.b)
    return np.stack(rows)


def _simulate_sensing(model: OccupancyModel, sensor: SensorModel, m,
                      b_seq, rng) -> np.ndarray:
    """Posterior occupancy estimates per cell and frame."""
    if sensor.noiseless:
        return b_seq.astype(float)
    t_total, n = b_seq.shape
    if np.isinf(m).any():
        raise ConfigError("noisy sensing needs a finite SU population")
    m_int = m.astype(int)
    out = np.empty((t_total, n))
    prior = np.full(n, float(model.pi_b))
    for t in range(t_total):
        xi = sample_detection_count(sensor, b_seq[t], m_int, rng)
        post = posterior_update(sensor, prior, xi, m_int)
        out[t] = post
        prior = np.asarray(prior_propagate(model, post), dtype=float)
    return out


def _fill_cells_uniform(centers, area, quota, rng, max_batches=20000):
    """quota uniform points per Voronoi cell via batched rejection sampling."""
    n = len(centers)
    placed = [[] for _ in range(n)]
    need = n * quota
    for _ in range(max_batches):
        pts = np.column_stack([rng.uniform(0, area[0], 512),
                               rng.uniform(0, area[1], 512)])
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        owner = d2.argmin(axis=1)
        for p, cell in zip(pts, owner):
            if len(placed[cell]) < quota:
                placed[cell].append(p)
                need -= 1
        if need == 0:
            return np.array([p for cell in placed for p in cell]), \
                np.repeat(np.arange(n), quota)
    raise RuntimeError("failed to place SUs uniformly per cell; degenerate cells?")


def _disc_offsets(n, radius, rng):
    r = radius * np.sqrt(rng.random(n))
    ang = rng.uniform(0, 2 * math.pi, n)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def _pl_linear(params: PathlossParams, tx_pos, rx_pos) -> np.ndarray:
    d = np.sqrt(((tx_pos[:, None, :] - rx_pos[None, :, :]) ** 2).sum(-1))
    d = np.maximum(d, 1.0)  # pathloss law degenerates at zero range
    return db_to_lin(pathloss_db(params, d, np.ones_like(d, dtype=bool)))


def _build_fading_layout(config, topology, rng) -> FadingLayout:
    m = config.m_per_cell
    su_tx, su_cell = _fill_cells_uniform(topology.cell_centers, topology.area,
                                         m, rng)
    r = topology.cell_radius
    clip = lambda p: np.column_stack([np.clip(p[:, 0], 0, topology.area[0]),
                                      np.clip(p[:, 1], 0, topology.area[1])])
    su_rx = clip(su_tx + _disc_offsets(len(su_tx), r, rng))
    pu_tx = topology.cell_centers
    pu_rx = clip(pu_tx + _disc_offsets(len(pu_tx), r, rng))
    pl = config.pathloss
    return FadingLayout(
        su_cell=su_cell,
        pl_su_su=_pl_linear(pl, su_tx, su_rx),
        pl_pu_su=_pl_linear(pl, pu_tx, su_rx),
        pl_su_pu=_pl_linear(pl, su_tx, pu_rx),
        pl_pu_pu=_pl_linear(pl, pu_tx, pu_rx),
    )


def prepare_scheme(config: ExperimentConfig, topology, phi, model,
                   trial: int, scheme_idx: int) -> SchemeRuntime:
    spec = config.schemes[scheme_idx]
    rt = SchemeRuntime(spec=spec)
    mu = float(model.mu)
    if spec.kind in ("ibt", "rt"):
        if spec.kind == "ibt":
            rt.tree = build_ibt(topology, phi, mu, spec.gamma_delay, spec.c_max)
        else:
            rng = _seed_rng(config.master_seed, trial, 5, scheme_idx)
            rt.tree = build_random_tree(topology, spec.gamma_delay, spec.c_max,
                                        rng)
        rt.weights = compute_weights(rt.tree, phi, mu)
        if config.is_mode == "hierarchical":
            rt.weights_uncomp = compute_weights(rt.tree, phi, 1.0)
        rt.warmup = int(rt.tree.delta[-1].max())
        rt.agg_cost_per_cell = rt.tree.cost_per_cell / config.resolved_hop_distance()
    elif spec.kind == "full_nsi":
        rt.delay_matrix = control.full_nsi_delay_matrix(
            topology.distance_matrix, spec.gamma_delay)
        rt.warmup = int(rt.delay_matrix.max())
        rt.agg_cost_per_cell = float(config.n_cells - 1)
    elif spec.kind == "radius_nsi":
        rt.w_within, rt.w_beyond = control.radius_masked_weights(
            phi, topology.distance_matrix, spec.radius)
        rt.agg_cost_per_cell = control.radius_cost(topology.distance_matrix,
                                                   spec.radius)
    elif spec.kind == "consensus":
        seed = _seed_int(config.master_seed, trial, 6, scheme_idx)
        adj = control.random_regular_connected(config.n_cells, spec.degree, seed)
        rt.mixer = control.consensus_mixer(adj, spec.rounds)
    return rt


def prepare_trial(config: ExperimentConfig, trial: int) -> TrialContext:
    topo_seed = _seed_int(config.master_seed, trial, 1)
    topology = build_topology(config.topology_kind, config.n_cells, config.area,
                              config.n_blockages, topo_seed, config.cell_radius)
    phi = compute_phi(topology, config.pathloss)
    model = config.occupancy_model()
    sensor = config.sensor_model()
    m = sample_su_population(PopulationModel(config.population_mode,
                                             config.m_per_cell),
                             config.n_cells, 0, None).m

    runtimes = [prepare_scheme(config, topology, phi, model, trial, k)
                for k in range(len(config.schemes))]
    warmup = max((rt.warmup for rt in runtimes), default=0) + config.extra_warmup
    t_total = config.frames + warmup

    b_seq = _simulate_occupancy(model, config.n_cells, t_total,
                                _seed_rng(config.master_seed, trial, 2))
    bhat_seq = _simulate_sensing(model, sensor, m, b_seq,
                                 _seed_rng(config.master_seed, trial, 3))
    fading = None
    if config.eval_mode == "fading_mc":
        fading = _build_fading_layout(config, topology,
                                      _seed_rng(config.master_seed, trial, 4))
    return TrialContext(config=config, trial=trial, topology=topology, phi=phi,
                        coupling=phi.coupling(), phi_diag=np.diag(phi.phi),
                        model=model, sensor=sensor, m=m, runtimes=runtimes,
                        warmup=warmup, t_total=t_total, b_seq=b_seq,
                        bhat_seq=bhat_seq, fading=fading)


# ----------------------------------------------------------------------------
# Frame loop


@dataclass
class FrameMetrics:
    t: int
    su_throughput: float
    inr_linear: float
    inr_db: float
    utility: float
    traffic: np.ndarray
    pu_success_rate: float = math.nan


def eval_fading_success(layout: FadingLayout, traffic, m, b, sinr_th: float,
                        pi_b: float, rng):
    """One frame of per-user Rayleigh evaluation.

    Draws Bernoulli access per SU from its cell traffic, unit-mean exponential
    power gains per active link, and counts SINR-threshold successes at the
    receivers of transmitting SUs and of active PUs.  Also returns the
    realized SU-caused INR averaged over the expected number of active PUs.
    """
    n_cells = layout.pl_pu_pu.shape[0]
    p = np.clip(np.asarray(traffic) / np.asarray(m), 0.0, 1.0)
    act = np.flatnonzero(rng.random(len(layout.su_cell)) < p[layout.su_cell])
    apu = np.flatnonzero(np.asarray(b) == 1)
    su_counts = np.zeros(n_cells)
    n_act, n_apu = len(act), len(apu)

    if n_act:
        g_ss = rng.exponential(size=(n_act, n_act))
        sub = layout.pl_su_su[np.ix_(act, act)] * g_ss
        own = np.diag(sub)
        i_su = sub.sum(axis=0) - own
        i_pu = (layout.pl_pu_su[np.ix_(apu, act)]
                * rng.exponential(size=(n_apu, n_act))).sum(axis=0)
        sinr = own / (1.0 + i_su + i_pu)
        ok = act[sinr > sinr_th]
        su_counts = np.bincount(layout.su_cell[ok], minlength=n_cells).astype(float)

    pu_rate = math.nan
    inr = 0.0
    if n_apu:
        i_sp = (layout.pl_su_pu[np.ix_(act, apu)]
                * rng.exponential(size=(n_act, n_apu))).sum(axis=0)
        g_pp = rng.exponential(size=(n_apu, n_apu))
        sub = layout.pl_pu_pu[np.ix_(apu, apu)] * g_pp
        own = np.diag(sub)
        i_pp = sub.sum(axis=0) - own
        pu_rate = float((own / (1.0 + i_sp + i_pp) > sinr_th).mean())
        inr = float(i_sp.sum() / (n_cells * pi_b))
    return su_counts, pu_rate, inr


class Simulation:
    """Frame-by-frame execution of one (trial, scheme, grid point) cell."""

    def __init__(self, ctx: TrialContext, runtime: SchemeRuntime,
                 grid_value: float, grid_idx: int, b_sequence=None):
        self.ctx = ctx
        self.rt = runtime
        self.grid_value = float(grid_value)
        cfg = ctx.config
        self.uncoordinated = runtime.spec.kind == "uncoordinated"
        lam = 1.0 if self.uncoordinated else self.grid_value
        self.params = control.ControlParams(lam=lam,
                                            sinr_th=cfg.sinr_th_linear())
        self.a_max = cfg.resolved_a_max()
        if b_sequence is None:
            self.b_seq = ctx.b_seq
            self.bhat_seq = ctx.bhat_seq
        else:
            self.b_seq = np.asarray(b_sequence, dtype=np.int8)
            if not ctx.sensor.noiseless:
                raise ValueError("overriding the occupancy sequence requires "
                                 "noiseless sensing")
            self.bhat_seq = self.b_seq.astype(float)
        self.exchange = None
        self.traffic_exchange = None
        if runtime.tree is not None:
            self.exchange = HierarchicalExchange(runtime.tree,
                                                 float(ctx.model.pi_b))
            if cfg.is_mode == "hierarchical":
                self.traffic_exchange = HierarchicalExchange(runtime.tree, 0.0)
        scheme_idx = [s.name for s in cfg.schemes].index(runtime.spec.name)
        self._eval_rng = _seed_rng(cfg.master_seed, ctx.trial, 7, scheme_idx,
                                   grid_idx)
        self.prev_traffic = np.zeros(cfg.n_cells)
        self.t = -1

    def _estimate_ip(self, t, bhat):
        rt, ctx = self.rt, self.ctx
        kind = rt.spec.kind
        if kind in ("ibt", "rt"):
            self.exchange.advance_frame(bhat, t)
            sigma = self.exchange.sigma_all(t)
            return estimate_ip(sigma, rt.weights, ctx.model)
        if kind == "full_nsi":
            return control.full_nsi_ip(ctx.phi, rt.delay_matrix, self.b_seq, t,
                                       ctx.model)
        if kind == "radius_nsi":
            return control.radius_nsi_ip(rt.w_within, rt.w_beyond,
                                         self.b_seq[t], ctx.model)
        if kind == "consensus":
            return control.consensus_ip(rt.mixer, bhat,
                                        ctx.coupling.sum(axis=0))
        raise AssertionError(kind)

    def _estimate_is(self, t):
        ctx = self.ctx
        if self.traffic_exchange is not None:
            # traffic decided this frame is unknown; feed the last commitment
            self.traffic_exchange.advance_frame(self.prev_traffic, t)
            sigma_a = self.traffic_exchange.sigma_all(t)
            return estimate_is_hierarchical(sigma_a, self.rt.weights_uncomp)
        return estimate_is_oracle(ctx.phi, self.prev_traffic)

    def run_frame(self) -> FrameMetrics:
        """Advance one frame: occupancy, sensing, exchange, decision, metrics."""
        self.t += 1
        t = self.t
        ctx, cfg = self.ctx, self.ctx.config
        b = self.b_seq[t]
        bhat = self.bhat_seq[t]

        if self.uncoordinated:
            a = control.uncoordinated_traffic(self.grid_value, ctx.m, self.a_max)
        else:
            ip_est = self._estimate_ip(t, bhat)
            is_est = self._estimate_is(t)
            a = control.optimal_traffic(ip_est, is_est, ctx.m, ctx.phi_diag,
                                        ctx.model, self.params, self.a_max)
        a = np.asarray(a, dtype=float)

        ip_true = b.astype(float) @ ctx.coupling
        is_true = a @ ctx.coupling - a
        inr_lin, _ = control.network_inr(a, b, ctx.phi, ctx.model)
        if self.uncoordinated:
            util = math.nan  # no cost weight is defined for fixed-probability access
        else:
            util = float(np.mean(control.utility(
                a, ip_true, is_true, ctx.m, ctx.phi_diag, ctx.model, self.params)))

        pu_rate = math.nan
        if cfg.eval_mode == "fading_mc":
            counts, pu_rate, inr_meas = eval_fading_success(
                ctx.fading, a, ctx.m, b, cfg.sinr_th_linear(),
                float(ctx.model.pi_b), self._eval_rng)
            throughput = float(counts.mean())
            inr_lin = inr_meas
        else:
            thr = control.throughput_lb(a, ctx.m, ip_true, is_true,
                                        ctx.phi_diag, self.params)
            throughput = float(np.mean(thr))

        self.prev_traffic = a
        return FrameMetrics(t=t, su_throughput=throughput, inr_linear=inr_lin,
                            inr_db=float(lin_to_db(inr_lin)), utility=util,
                            traffic=a.copy(), pu_success_rate=pu_rate)


# ----------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    lambda_or_ptx: float
    seed: int
    mean_su_throughput: float
    mean_inr_db: float
    mean_utility: float
    agg_cost_per_cell: float
    frames: int
    n_cells: int

    # linear-scale mean kept for aggregation; not part of the CSV schema
    mean_inr_linear: float = 0.0


CSV_COLUMNS = ("scheme", "lambda_or_ptx", "seed", "mean_su_throughput",
               "mean_inr_db", "mean_utility", "agg_cost_per_cell", "frames",
               "n_cells")


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def rows_for(self, scheme: str, grid_value: float | None = None
                 ) -> list[SweepRow]:
        out = [r for r in self.rows if r.scheme == scheme]
        if grid_value is not None:
            out = [r for r in out if r.lambda_or_ptx == grid_value]
        return out

    def grid_values(self, scheme: str) -> list[float]:
        seen = []
        for r in self.rows:
            if r.scheme == scheme and r.lambda_or_ptx not in seen:
                seen.append(r.lambda_or_ptx)
        return seen

    def summary(self) -> list[dict]:
        out = []
        for scheme in dict.fromkeys(r.scheme for r in self.rows):
            for gval in self.grid_values(scheme):
                rows = self.rows_for(scheme, gval)
                thr = np.array([r.mean_su_throughput for r in rows])
                lin = np.array([r.mean_inr_linear for r in rows])
                util = np.array([r.mean_utility for r in rows])
                out.append({
                    "scheme": scheme,
                    "lambda_or_ptx": gval,
                    "n_trials": len(rows),
                    "mean_su_throughput": float(thr.mean()),
                    "sem_su_throughput": float(thr.std(ddof=1) / math.sqrt(len(thr)))
                    if len(thr) > 1 else 0.0,
                    "mean_inr_db": float(lin_to_db(lin.mean())),
                    "mean_utility": float(util.mean()),
                    "agg_cost_per_cell": float(np.mean(
                        [r.agg_cost_per_cell for r in rows])),
                })
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([r.scheme, repr(r.lambda_or_ptx), r.seed,
                                 repr(r.mean_su_throughput), repr(r.mean_inr_db),
                                 repr(r.mean_utility), repr(r.agg_cost_per_cell),
                                 r.frames, r.n_cells])

    def write_summary_csv(self, path) -> None:
        rows = self.summary()
        cols = list(rows[0].keys()) if rows else []
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in rows:
                writer.writerow([r[c] if isinstance(r[c], (str, int))
                                 else repr(float(r[c])) for c in cols])


def run_trial_point(ctx: TrialContext, scheme_idx: int, grid_value: float,
                    grid_idx: int) -> tuple[list[FrameMetrics], SweepRow]:
    """All frames of one (trial, scheme, grid) cell plus its summary row."""
    cfg = ctx.config
    rt = ctx.runtimes[scheme_idx]
    sim = Simulation(ctx, rt, grid_value, grid_idx)
    frames = [sim.run_frame() for _ in range(ctx.t_total)]
    measured = frames[ctx.warmup:]
    thr = float(np.mean([f.su_throughput for f in measured]))
    lin = float(np.mean([f.inr_linear for f in measured]))
    util = float(np.mean([f.utility for f in measured]))
    row = SweepRow(scheme=rt.spec.name, lambda_or_ptx=grid_value, seed=ctx.trial,
                   mean_su_throughput=thr, mean_inr_db=float(lin_to_db(lin)),
                   mean_utility=util, agg_cost_per_cell=rt.agg_cost_per_cell,
                   frames=cfg.frames, n_cells=cfg.n_cells,
                   mean_inr_linear=lin)
    return frames, row


def run_experiment(config: ExperimentConfig) -> SweepResult:
    """Sweep every scheme over its grid, averaging over topology realizations."""
    config.validate()
    rows = []
    for trial in range(config.trials):
        ctx = prepare_trial(config, trial)
        for scheme_idx, spec in enumerate(config.schemes):
            grid = config.ptx_grid if spec.kind == "uncoordinated" \
                else config.lambda_grid
            for grid_idx, gval in enumerate(grid):
                _, row = run_trial_point(ctx, scheme_idx, gval, grid_idx)
                rows.append(row)
    order = {s.name: k for k, s in enumerate(config.schemes)}
    rows.sort(key=lambda r: (order[r.scheme], r.lambda_or_ptx, r.seed))
    return SweepResult(rows=rows)
