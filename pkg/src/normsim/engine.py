"""Generation loop for the four model families.

Agents live in flat arrays indexed by agent id; ``Placement`` maps grid/graph
nodes to agents so mobility can move agents without touching their strategy,
tag or memory. One call to :func:`run_generation` plays one generation,
snapshots metrics for the strategies that just played, then applies the
imitation update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import games
from .config import ModelConfig
from .dynamics import ExplorationParams, FermiParams, imitation_update
from .games import PUNISHES_CONTRIBUTE, PUNISHES_WITHHOLD, CooperationStrategy, N_PUNISH
from .topology import (
    Placement,
    Topology,
    TopologyError,
    make_grid,
    make_small_world,
    make_well_mixed,
    mean_strength_of_ties,
    mobility_shuffle,
)

SCHEDULES = {
    "pgg": ("ContributionPhase", "PunishmentPhase", "MetricsSnapshot", "ImitationUpdate"),
    "third_party": ("MobilityShuffle", "ContributionPhase", "PunishmentPhase", "MetricsSnapshot", "ImitationUpdate"),
    "threat": (
        "BasePayAndThreat", "ContributionPhase", "PunishmentPhase", "FitnessTransform", "MetricsSnapshot",
        "ImitationUpdate",
    ),
    "ethnocentrism": ("MobilityShuffle", "PdRounds", "MetricsSnapshot", "ImitationUpdate"),
}

_C = int(CooperationStrategy.COOPERATE)
_D = int(CooperationStrategy.DEFECT)
_OC = int(CooperationStrategy.OPPORTUNISTIC_COOPERATE)
_OD = int(CooperationStrategy.OPPORTUNISTIC_DEFECT)
_O = int(CooperationStrategy.OPPORTUNIST)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Agent:
    id: int
    strategy: object
    group_tag: int | None
    accumulated_payoff: float


@dataclass
class MetricsRecord:
    generation: int
    strategy_proportions: np.ndarray
    cooperation_rate: float
    mean_payoff: float
    extras: dict[str, float] = field(default_factory=dict)


@dataclass
class SimulationState:
    strategies: np.ndarray
    topology: Topology
    placement: Placement
    universe: np.ndarray
    payoffs: np.ndarray
    tags: np.ndarray | None = None
    group_memory: np.ndarray | None = None
    individual_memory: np.ndarray | None = None
    generation: int = 0
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.strategies.shape[0]

    def agent(self, i: int) -> Agent:
        code = int(self.strategies[i])
        if self.tags is not None:
            strategy = games.EntitativeProgram.from_code(code)
            tag = int(self.tags[i])
        else:
            strategy = games.split_pgg_code(code)
            tag = None
        return Agent(i, strategy, tag, float(self.payoffs[i]))

    def proportions(self) -> np.ndarray:
        counts = np.bincount(np.searchsorted(self.universe, self.strategies), minlength=self.universe.shape[0])
        return counts / self.size


# ---------------------------------------------------------------------------
# setup


def build_topology(config: ModelConfig, rng: np.random.Generator) -> Topology:
    if config.topology == "grid":
        return make_grid(config.width, config.height, config.neighborhood, config.wraparound)
    if config.topology == "small_world":
        graph_rng = rng if config.regenerate_graph else np.random.default_rng(config.graph_seed)
        return make_small_world(config.size, config.mean_degree, config.rewire_prob, graph_rng)
    return make_well_mixed(config.size)


def init_state(config: ModelConfig, rng: np.random.Generator) -> SimulationState:
    """Topology first (when regenerated per run), then strategies, then group tags."""
    config.validate()
    topo = build_topology(config, rng)
    n = topo.node_count
    if topo.kind != "well_mixed" and np.any(topo.degree == 0):
        raise TopologyError("every agent needs at least one neighbor; the generated graph has isolated nodes")
    universe = np.asarray(config.universe(), dtype=np.int64)
    strategies = universe[rng.integers(universe.shape[0], size=n)]
    state = SimulationState(
        strategies=strategies,
        topology=topo,
        placement=Placement.identity(n),
        universe=universe,
        payoffs=np.zeros(n),
    )
    if config.family == "ethnocentrism":
        state.tags = rng.integers(config.n_groups, size=n)
        state.group_memory = np.ones((n, config.n_groups), dtype=np.int8)
        state.individual_memory = np.ones((n, n), dtype=np.int8)
    return state


# ---------------------------------------------------------------------------
# shared pieces


def _neighbor_choice(state: SimulationState, rng: np.random.Generator) -> np.ndarray:
    """A uniformly random neighbor for every agent, drawn in agent order."""
    n = state.size
    if state.topology.kind == "well_mixed":
        pick = rng.integers(n - 1, size=n)
        return pick + (pick >= np.arange(n))
    node_of = state.placement.node_of_agent
    return state.placement.agent_at_node[state.topology.random_neighbors(node_of, rng)]


def _neighbor_reputation_counts(state: SimulationState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per agent: how many neighbors punish withholders, punish contributors, and degree."""
    topo = state.topology
    at_node = state.placement.agent_at_node
    pun_at_node = (state.strategies % N_PUNISH)[at_node]
    nbr_pun = pun_at_node[topo.indices]
    rows = np.repeat(np.arange(topo.node_count), topo.degree)
    n_w = np.bincount(rows, weights=PUNISHES_WITHHOLD[nbr_pun], minlength=topo.node_count)
    n_c = np.bincount(rows, weights=PUNISHES_CONTRIBUTE[nbr_pun], minlength=topo.node_count)
    node_of = state.placement.node_of_agent
    return n_w[node_of], n_c[node_of], topo.degree[node_of]


def _visible_contributions(state: SimulationState, config: ModelConfig) -> np.ndarray:
    """Contribution choice per agent when reputations of all neighbors are visible (C, D, O)."""
    coop = state.strategies // N_PUNISH
    n_w, n_c, deg = _neighbor_reputation_counts(state)
    opp = games.opportunist_contributes(n_w, n_c, deg, config.c, config.rho)
    return np.where(coop == _C, True, np.where(coop == _D, False, opp))


def _play_groups(
    groups: np.ndarray,
    state: SimulationState,
    config: ModelConfig,
    rng: np.random.Generator,
    payoffs: np.ndarray,
    visible: np.ndarray | None = None,
) -> tuple[int, int]:
    """Public goods games on the rows of ``groups`` plus single-observer punishment.

    Each participant gets one uniformly chosen co-participant as observer. With
    ``visible`` given, contributions are fixed per agent (C/D/O models);
    otherwise OC/OD learn the observer's reputation with probability iota.
    Returns (number of contribution decisions, number of contributions).
    """
    n_groups, k = groups.shape
    other = rng.integers(k - 1, size=(n_groups, k))
    other = other + (other >= np.arange(k))
    observers = np.take_along_axis(groups, other, axis=1)
    informed = rng.random((n_groups, k)) < config.iota

    coop = state.strategies // N_PUNISH
    pun = state.strategies % N_PUNISH
    obs_pun = pun[observers]
    if visible is not None:
        act = visible[groups]
    else:
        table = games.opportunist_table(config.pgg_params())
        cg = coop[groups]
        uninformed = (cg == _C) | (cg == _OC)
        opportunistic = (cg == _OC) | (cg == _OD)
        act = np.where(opportunistic & informed, table[obs_pun], uninformed)

    m_coop = act.sum(axis=1, keepdims=True)
    game = config.b * config.c * m_coop / k - config.c * act
    fires = np.where(act, PUNISHES_CONTRIBUTE[obs_pun], PUNISHES_WITHHOLD[obs_pun])
    n = payoffs.shape[0]
    payoffs += np.bincount(groups.ravel(), weights=(game - config.rho * fires).ravel(), minlength=n)
    payoffs += np.bincount(observers.ravel(), weights=(-config.lam * fires).ravel(), minlength=n)
    return act.size, int(act.sum())


def _pgg_groups(state: SimulationState, config: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    n, k = state.size, config.k
    if state.topology.kind == "well_mixed":
        return rng.permutation(n).reshape(n // k, k)
    # networked: each agent anchors a group of itself plus k-1 members of its
    # neighborhood, padded with random non-neighbors when the degree is short
    topo = state.topology
    at_node = state.placement.agent_at_node
    node_of = state.placement.node_of_agent
    groups = np.empty((n, k), dtype=np.int64)
    for a in range(n):
        node = node_of[a]
        nbrs = at_node[topo.neighbors(node)]
        if nbrs.shape[0] >= k - 1:
            chosen = rng.choice(nbrs, size=k - 1, replace=False)
        else:
            outside = np.setdiff1d(np.arange(n), np.append(nbrs, a), assume_unique=False)
            chosen = np.concatenate([nbrs, rng.choice(outside, size=k - 1 - nbrs.shape[0], replace=False)])
        groups[a, 0] = a
        groups[a, 1:] = chosen
    return groups


def _class_extras(state: SimulationState) -> dict[str, float]:
    coop = state.strategies // N_PUNISH
    pun = state.strategies % N_PUNISH
    n = state.size
    out = {}
    present_coop = sorted(set((state.universe // N_PUNISH).tolist()))
    present_pun = sorted(set((state.universe % N_PUNISH).tolist()))
    for c in present_coop:
        out[f"coop:{games.COOP_LABELS[CooperationStrategy(c)]}"] = float(np.count_nonzero(coop == c)) / n
    for p in present_pun:
        out[f"punish:{games.PUNISH_LABELS[games.PunishmentStrategy(p)]}"] = float(np.count_nonzero(pun == p)) / n
    return out


# ---------------------------------------------------------------------------
# family steps; each fills state.payoffs and returns (fitness for selection, record)


def _step_pgg(state, config, rng):
    payoffs = state.payoffs
    decisions = contributions = 0
    for _ in range(config.rounds):
        groups = _pgg_groups(state, config, rng)
        d, c = _play_groups(groups, state, config, rng, payoffs)
        decisions += d
        contributions += c
    return payoffs, contributions / decisions, _class_extras(state)


def _pair_index(state: SimulationState) -> dict:
    """For every directed (observed, co-player) edge: node ids and the co-player's row offset."""
    key = "pairs"
    if key not in state.cache:
        topo = state.topology
        edges = topo.edges
        n = topo.node_count
        src = np.repeat(np.arange(n), topo.degree)
        flat = src * n + topo.indices  # sorted, since rows and row entries are ascending
        observed = np.concatenate([edges[:, 0], edges[:, 1]])
        partner = np.concatenate([edges[:, 1], edges[:, 0]])
        offset = np.searchsorted(flat, observed * n + partner) - topo.indptr[observed]
        state.cache[key] = dict(edges=edges, observed=observed, partner=partner, offset=offset)
    return state.cache[key]


def _step_third_party(state, config, rng):
    state.placement = mobility_shuffle(state.placement, config.m, rng)
    topo = state.topology
    at_node = state.placement.agent_at_node
    pairs = _pair_index(state)
    n_edges = pairs["edges"].shape[0]

    contributes = _visible_contributions(state, config)
    a_obs = at_node[pairs["observed"]]
    a_par = at_node[pairs["partner"]]
    act = contributes[a_obs]
    # one k=2 game per edge: each direction's payoff to the observed player
    game = config.b * config.c * (act.astype(float) + contributes[a_par]) / 2 - config.c * act

    # third-party observer: a random neighbor of the observed player other than the co-player
    deg = topo.degree[pairs["observed"]]
    choices = deg - 1
    pick = (rng.random(2 * n_edges) * np.maximum(choices, 1)).astype(np.int64)
    pick = pick + (pick >= pairs["offset"])
    has_observer = choices > 0
    obs_node = topo.indices[np.minimum(topo.indptr[pairs["observed"]] + pick, topo.indices.shape[0] - 1)]
    a_watch = at_node[obs_node]
    obs_pun = state.strategies[a_watch] % N_PUNISH
    fires = has_observer & np.where(act, PUNISHES_CONTRIBUTE[obs_pun], PUNISHES_WITHHOLD[obs_pun])

    n = state.size
    payoffs = state.payoffs
    payoffs += np.bincount(a_obs, weights=game - config.rho * fires, minlength=n)
    payoffs += np.bincount(a_watch, weights=-config.lam * fires, minlength=n)

    extras = _class_extras(state)
    extras["mean_tie_strength"] = state.cache.setdefault("tie", mean_strength_of_ties(topo))
    extras["punishment_rate"] = float(fires.sum()) / (2 * n_edges)
    coop_rate = float(act.sum()) / act.shape[0] if act.shape[0] else 0.0
    return payoffs, coop_rate, extras


def _step_threat(state, config, rng):
    topo = state.topology
    groups = state.cache.get("neigh")
    if groups is None:
        groups = state.cache.setdefault("neigh", topo.closed_neighborhoods())
    groups = state.placement.agent_at_node[groups]
    visible = _visible_contributions(state, config)
    payoffs = state.payoffs
    payoffs += config.base_pay - config.tau
    decisions = contributions = 0
    for _ in range(config.rounds):
        d, c = _play_groups(groups, state, config, rng, payoffs, visible=visible)
        decisions += d
        contributions += c
    fit = games.fitness(payoffs, config.threat_params())
    extras = _class_extras(state)
    extras["mean_fitness"] = float(fit.mean())
    return fit, contributions / decisions, extras


def _last_occurrence(keys: np.ndarray) -> np.ndarray:
    """Index of the last occurrence of each distinct key."""
    rev = keys[::-1]
    _, first_in_rev = np.unique(rev, return_index=True)
    return keys.shape[0] - 1 - first_in_rev


def _step_ethnocentrism(state, config, rng):
    state.placement = mobility_shuffle(state.placement, config.m, rng)
    at_node = state.placement.agent_at_node
    edges = state.cache.get("edges")
    if edges is None:
        edges = state.cache.setdefault("edges", state.topology.edges)
    a = at_node[edges[:, 0]]
    b = at_node[edges[:, 1]]
    codes, tags = state.strategies, state.tags
    gmem, imem = state.group_memory, state.individual_memory

    act_a = games.entitative_actions_vec(codes[a], tags[a], tags[b], gmem[a, tags[b]], imem[a, b])
    act_b = games.entitative_actions_vec(codes[b], tags[b], tags[a], gmem[b, tags[a]], imem[b, a])
    pd = config.pd().as_array()
    n = state.size
    payoffs = state.payoffs
    payoffs += np.bincount(a, weights=pd[act_a, act_b], minlength=n)
    payoffs += np.bincount(b, weights=pd[act_b, act_a], minlength=n)

    # memory of the action received; within a generation the last edge in order wins
    imem[a, b] = act_b
    imem[b, a] = act_a
    receiver = np.column_stack([a, b]).ravel()
    sender_tag = np.column_stack([tags[b], tags[a]]).ravel()
    received = np.column_stack([act_b, act_a]).ravel()
    last = _last_occurrence(receiver * config.n_groups + sender_tag)
    gmem[receiver[last], sender_tag[last]] = received[last]

    actor_tag = np.concatenate([tags[a], tags[b]])
    target_tag = np.concatenate([tags[b], tags[a]])
    acts = np.concatenate([act_a, act_b])
    same = actor_tag == target_tag
    n_in = int(same.sum())
    n_out = acts.shape[0] - n_in
    extras = {
        "group_entitative": float(np.count_nonzero(codes < 16)) / n,
        "ingroup_defection": float(np.count_nonzero(acts[same] == 0)) / n_in if n_in else float("nan"),
        "outgroup_defection": float(np.count_nonzero(acts[~same] == 0)) / n_out if n_out else float("nan"),
    }
    for rule in games.Rule:
        uses = ((codes < 16) & ((codes // 4 == rule) | (codes % 4 == rule))) | (codes - 16 == rule)
        extras[f"rule:{games.RULE_LABELS[rule]}"] = float(np.count_nonzero(uses)) / n
    coop_rate = float(acts.sum()) / acts.shape[0] if acts.shape[0] else 0.0
    return payoffs, coop_rate, extras


_STEPS = {
    "pgg": _step_pgg,
    "third_party": _step_third_party,
    "threat": _step_threat,
    "ethnocentrism": _step_ethnocentrism,
}


def run_generation(
    state: SimulationState, config: ModelConfig, rng: np.random.Generator
) -> tuple[SimulationState, MetricsRecord]:
    """Play one generation in place and return the state with this generation's metrics."""
    if (config.family == "ethnocentrism") != (state.tags is not None):
        raise SimulationError(f"state does not match model family {config.family!r}")
    if state.strategies.shape[0] != state.topology.node_count:
        raise SimulationError("state has a different number of agents than its topology")

    state.payoffs = np.zeros(state.size)
    selection_values, coop_rate, extras = _STEPS[config.family](state, config, rng)
    record = MetricsRecord(
        generation=state.generation,
        strategy_proportions=state.proportions(),
        cooperation_rate=coop_rate,
        mean_payoff=float(state.payoffs.mean()),
        extras=extras,
    )
    neighbors = _neighbor_choice(state, rng)
    fermi, explore = FermiParams(config.s), ExplorationParams(config.mu)
    if state.tags is not None and config.inherit_tags:
        # imitate and explore over joint (program, tag) codes so the tag travels with the program
        g = config.n_groups
        joint_universe = (state.universe[:, None] * g + np.arange(g)).ravel()
        joint = imitation_update(
            state.strategies * g + state.tags, selection_values, neighbors, fermi, explore, joint_universe, rng
        )
        state.strategies, state.tags = joint // g, joint % g
    else:
        state.strategies = imitation_update(
            state.strategies, selection_values, neighbors, fermi, explore, state.universe, rng
        )
    state.generation += 1
    return state, record


def run_simulation(config: ModelConfig, seed: int | None = None) -> list[MetricsRecord]:
    """Run ``config.generations`` generations from a fresh population; one record per generation."""
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    state = init_state(config, rng)
    records = []
    for _ in range(config.generations):
        state, record = run_generation(state, config, rng)
        records.append(record)
    return records


def long_run_summary(records: list[MetricsRecord], labels: list[str], burn_in: float = 0.0) -> dict[str, float]:
    """Time averages over the generations after the burn-in fraction.

    Keys: one per strategy label, ``cooperation_rate``, ``mean_payoff`` and every extra.
    """
    if not records:
        raise ValueError("no generations to average")
    start = int(len(records) * burn_in)
    window = records[start:] or records[-1:]
    props = np.mean([r.strategy_proportions for r in window], axis=0)
    out = {label: float(p) for label, p in zip(labels, props)}
    out["cooperation_rate"] = float(np.mean([r.cooperation_rate for r in window]))
    out["mean_payoff"] = float(np.mean([r.mean_payoff for r in window]))
    for key in window[0].extras:
        vals = np.array([r.extras[key] for r in window], dtype=float)
        out[key] = float(np.nanmean(vals)) if np.any(~np.isnan(vals)) else float("nan")
    return out
