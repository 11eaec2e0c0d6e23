"""Decentralized SU traffic control and the baseline network-state policies.

Each cell picks its expected SU traffic to maximize a payoff-minus-cost
utility: a Jensen lower bound on the cell throughput, minus lambda times the
cell's expected contribution to the interference experienced by licensed
users.  The bound is concave in the traffic, so the maximizer has a closed
form with projection onto [0, M].
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import OccupancyModel
from .topology import _phi_array


@dataclass(frozen=True)
class ControlParams:
    """lam: interference cost weight; sinr_th: decoding threshold (linear)."""

    lam: float
    sinr_th: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.sinr_th <= 0:
            raise ValueError("sinr_th must be positive")


def throughput_lb(a, m, ip, is_, phi_ii, params: ControlParams):
    """Jensen lower bound on the expected SU cell throughput.

    Dense populations enter as m = inf, which drops the 1/M self-exclusion
    term.
    """
    a = np.asarray(a, dtype=float)
    m = np.asarray(m, dtype=float)
    inv_m = np.where(np.isinf(m), 0.0, 1.0 / m)
    th = params.sinr_th
    num = a * np.exp(-th / np.asarray(phi_ii, dtype=float))
    den = 1.0 + th * (a * (1.0 - inv_m) + np.asarray(ip) + np.asarray(is_))
    out = num / den
    return float(out) if out.ndim == 0 else out


def _binom_pmf(n: int, k: int, p: float) -> float:
    return math.comb(n, k) * p ** k * (1.0 - p) ** (n - k)


def exact_throughput(a, b, m, phi, params: ControlParams, i: int) -> float:
    """Exact expected throughput of cell i by enumerating access outcomes.

    Enumerates the binomial access counts of every cell (the reference cell
    with one slot excluded), so only tiny populations are tractable.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.isinf(m).any() or m.sum() > 25:
        raise ValueError("instance too large for exact enumeration")
    if ((a < 0) | (a > m)).any():
        raise ValueError("traffic must lie in [0, m]")
    n = len(a)
    m_int = m.astype(int)
    phi_arr = _phi_array(phi)
    w = phi_arr[:, i] / phi_arr[i, i]
    th = params.sinr_th
    base = 1.0 + th * float(w @ b)

    ranges, pmfs, weights = [], [], []
    for j in range(n):
        if j == i:
            trials = m_int[i] - 1
            weights.append(1.0)  # own extra accessor enters with weight one
        else:
            trials = m_int[j]
            weights.append(w[j])
        p = float(a[j] / m[j])
        ranges.append(range(trials + 1))
        pmfs.append([_binom_pmf(trials, k, p) for k in range(trials + 1)])

    total = 0.0
    for counts in itertools.product(*ranges):
        prob = 1.0
        load = 0.0
        for j, k in enumerate(counts):
            prob *= pmfs[j][k]
            load += weights[j] * k
        if prob:
            total += prob / (base + th * load)
    return float(a[i] * math.exp(-th / phi_arr[i, i]) * total)


def optimal_traffic(ip, is_, m, phi_ii, model: OccupancyModel,
                    params: ControlParams, a_max: float | None = None):
    """Closed-form maximizer of the local utility, projected onto [0, M].

    Vanishing licensed-user interference makes the utility strictly
    increasing, so the upper clip is returned; dense populations then need a
    finite a_max rail.
    """
    ip = np.asarray(ip, dtype=float)
    is_ = np.asarray(is_, dtype=float)
    m = np.asarray(m, dtype=float)
    phi_ii = np.asarray(phi_ii, dtype=float)
    if (ip < 0).any() or (is_ < 0).any():
        raise ValueError("interference estimates must be nonnegative")
    upper = np.where(np.isinf(m), math.inf if a_max is None else float(a_max), m)
    if np.any((ip <= 0) & np.isinf(upper)):
        raise ValueError("ip = 0 with an unbounded population needs a_max")

    th = params.sinr_th
    pi_b = float(model.pi_b)
    c = np.where(np.isinf(m), 1.0, 1.0 - 1.0 / m)
    root = np.sqrt(1.0 + th * (ip + is_))
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = (math.sqrt(pi_b) * np.exp(-th / (2.0 * phi_ii))
                / np.sqrt(params.lam * phi_ii * ip))
        val = root / (th * c) * (gain - root)
    # c = 0 (single SU) makes the utility linear: +-inf here encodes the slope
    # sign and the clip below lands on the right endpoint; 0 * inf means a
    # zero slope, for which idling is as good as anything.
    val = np.where(np.isnan(val), 0.0, val)
    out = np.clip(val, 0.0, upper)
    return float(out) if out.ndim == 0 else out


def utility(a, ip, is_, m, phi_ii, model: OccupancyModel, params: ControlParams):
    """Throughput lower bound minus the weighted interference charge."""
    a = np.asarray(a, dtype=float)
    r_hat = throughput_lb(a, m, ip, is_, phi_ii, params)
    iota = a * np.asarray(phi_ii, dtype=float) * np.asarray(ip) / float(model.pi_b)
    out = r_hat - params.lam * iota
    return float(out) if np.ndim(out) == 0 else out


def network_inr(a, b, phi, model: OccupancyModel):
    """Average INR caused to active licensed users, plus per-cell contributions.

    Returns (inr_linear, iota) with inr defined as the mean of the per-cell
    contributions, making the decomposition identity exact by construction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    phi_arr = _phi_array(phi)
    iota = a * (phi_arr @ b) / float(model.pi_b)
    return float(iota.sum() / len(a)), iota


# --------------------------------------------------------------------------
# Baseline network-state policies


def full_nsi_delay_matrix(distance_matrix, gamma_delay: float) -> np.ndarray:
    return np.ceil(gamma_delay * np.asarray(distance_matrix)).astype(int)


def full_nsi_ip(phi, delay_matrix, b_history, t: int, model: OccupancyModel
                ) -> np.ndarray:
    """Delay-compensated estimate from (delayed) true occupancy bits.

    Bits older than the simulated history enter at the steady-state prior.
    """
    phi_arr = _phi_array(phi)
    w = phi_arr / np.diag(phi_arr)[None, :]
    pi_b = float(model.pi_b)
    mu = float(model.mu)
    ip = pi_b * w.sum(axis=0)
    for d in np.unique(delay_matrix):
        if t - d < 0:
            continue  # prior only: the correction term vanishes
        mask = delay_matrix == d
        dev = np.asarray(b_history[t - d], dtype=float) - pi_b
        ip = ip + (mu ** int(d)) * (dev @ (w * mask))
    return np.maximum(ip, 0.0)


def radius_masked_weights(phi, distance_matrix, radius: float):
    """Split the coupling weights into within-radius and beyond-radius parts."""
    phi_arr = _phi_array(phi)
    w = phi_arr / np.diag(phi_arr)[None, :]
    within = np.asarray(distance_matrix) <= radius
    return w * within, w * ~within


def radius_nsi_ip(w_within, w_beyond, b, model: OccupancyModel) -> np.ndarray:
    """Exact bits inside the radius, steady-state prior beyond it."""
    return np.asarray(b, dtype=float) @ w_within \
        + float(model.pi_b) * w_beyond.sum(axis=0)


def radius_cost(distance_matrix, radius: float) -> float:
    """Mean number of other cells inside the radius (per-cell NSI cost)."""
    d = np.asarray(distance_matrix)
    within = (d <= radius) & ~np.eye(len(d), dtype=bool)
    return float(within.sum(axis=1).mean())


def uncoordinated_traffic(p_tx: float, m, a_max: float | None = None
                          ) -> np.ndarray:
    """Constant access probability, bypassing interference estimation."""
    if not 0 <= p_tx <= 1:
        raise ValueError("p_tx must lie in [0, 1]")
    m = np.asarray(m, dtype=float)
    if np.isinf(m).any():
        if a_max is None:
            raise ValueError("dense population needs a_max for uncoordinated access")
        return np.full(m.shape, p_tx * a_max)
    return p_tx * m


def random_regular_connected(n: int, degree: int, seed: int,
                             max_tries: int = 50) -> np.ndarray:
    """Adjacency matrix of a connected random regular graph (bounded retries)."""
    import networkx as nx

    for attempt in range(max_tries):
        g = nx.random_regular_graph(degree, n, seed=seed + attempt)
        if nx.is_connected(g):
            return nx.to_numpy_array(g, nodelist=range(n)).astype(bool)
    raise RuntimeError(f"no connected degree-{degree} graph found in "
                       f"{max_tries} tries")


def metropolis_weights(adjacency) -> np.ndarray:
    """Doubly stochastic averaging weights; converge on any connected graph."""
    adj = np.asarray(adjacency, dtype=bool)
    deg = adj.sum(axis=1)
    pair_deg = 1.0 + np.maximum(deg[:, None], deg[None, :])
    w = np.where(adj, 1.0 / pair_deg, 0.0)
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def consensus_mixer(adjacency, rounds: int) -> np.ndarray:
    return np.linalg.matrix_power(metropolis_weights(adjacency), rounds)


def consensus_ip(mixer, b_hat, phi_tot) -> np.ndarray:
    """Averaged occupancy estimate scaled by each cell's total coupling."""
    x = mixer @ np.asarray(b_hat, dtype=float)
    return np.maximum(x * np.asarray(phi_tot), 0.0)


def baseline_ip_estimate(scheme: str, **kw):
    """Dispatch to one NSI baseline; uncoordinated returns traffic directly."""
    if scheme == "full_nsi":
        return full_nsi_ip(kw["phi"], kw["delay_matrix"], kw["b_history"],
                           kw["t"], kw["model"])
    if scheme == "radius_nsi":
        w_in, w_out = radius_masked_weights(kw["phi"], kw["distance_matrix"],
                                            kw["radius"])
        return radius_nsi_ip(w_in, w_out, kw["b"], kw["model"])
    if scheme == "uncoordinated":
        return uncoordinated_traffic(kw["p_tx"], kw["m"], kw.get("a_max"))
    if scheme == "consensus":
        return consensus_ip(kw["mixer"], kw["b_hat"], kw["phi_tot"])
    raise ValueError(f"unknown scheme {scheme!r}")
