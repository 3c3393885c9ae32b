"""Payoff and choice rules for the four model families.

Scalar functions here are the readable reference versions. The engine uses the
array versions further down (``*_table`` / ``*_vec``), which the tests pin
against the scalar ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable

import numpy as np


class ConfigurationError(ValueError):
    """A model was asked to do something its configuration does not allow."""


class Action(IntEnum):
    DEFECT = 0
    COOPERATE = 1
    # contribution-phase names for the same two choices
    WITHHOLD = 0
    CONTRIBUTE = 1


class CooperationStrategy(IntEnum):
    COOPERATE = 0
    DEFECT = 1
    OPPORTUNISTIC_COOPERATE = 2
    OPPORTUNISTIC_DEFECT = 3
    OPPORTUNIST = 4  # OC and OD merged, for models where reputations are always visible


class PunishmentStrategy(IntEnum):
    RESPONSIBLE = 0
    ANTISOCIAL = 1
    SPITEFUL = 2
    NON_PUNISHER = 3


class Rule(IntEnum):
    ALLC = 0
    ALLD = 1
    TFT = 2
    OTFT = 3


class Entitativity(IntEnum):
    GROUP = 0
    INDIVIDUAL = 1


COOP_LABELS = {
    CooperationStrategy.COOPERATE: "C",
    CooperationStrategy.DEFECT: "D",
    CooperationStrategy.OPPORTUNISTIC_COOPERATE: "OC",
    CooperationStrategy.OPPORTUNISTIC_DEFECT: "OD",
    CooperationStrategy.OPPORTUNIST: "O",
}
PUNISH_LABELS = {
    PunishmentStrategy.RESPONSIBLE: "R",
    PunishmentStrategy.ANTISOCIAL: "A",
    PunishmentStrategy.SPITEFUL: "S",
    PunishmentStrategy.NON_PUNISHER: "N",
}
RULE_LABELS = {Rule.ALLC: "AllC", Rule.ALLD: "AllD", Rule.TFT: "TFT", Rule.OTFT: "OTFT"}

# indexed by PunishmentStrategy value
PUNISHES_WITHHOLD = np.array([True, False, True, False])
PUNISHES_CONTRIBUTE = np.array([False, True, True, False])

N_PUNISH = len(PunishmentStrategy)


@dataclass(frozen=True)
class PggParams:
    group_size: int = 5
    contribution: float = 1.0
    benefit_factor: float = 3.0
    punish_cost: float = 1.0
    punish_penalty: float = 3.0
    reputation_prob: float = 1.0

    def __post_init__(self):
        if int(self.group_size) != self.group_size or self.group_size < 1:
            raise ValueError(f"group_size must be a positive integer, got {self.group_size}")
        if not self.contribution > 0:
            raise ValueError(f"contribution must be > 0, got {self.contribution}")
        if not self.benefit_factor > 1:
            raise ValueError(f"benefit_factor must be > 1, got {self.benefit_factor}")
        if not 0 < self.punish_cost < self.punish_penalty:
            raise ValueError(
                f"need 0 < punish_cost < punish_penalty, got {self.punish_cost} and {self.punish_penalty}"
            )
        if not 0 <= self.reputation_prob <= 1:
            raise ValueError(f"reputation_prob must lie in [0, 1], got {self.reputation_prob}")


@dataclass(frozen=True)
class ThreatParams:
    base_pay: float = 30.0
    threat_level: float = 0.0
    fitness_scale: float = 0.1

    def __post_init__(self):
        if not self.threat_level >= 0:
            raise ValueError(f"threat_level must be >= 0, got {self.threat_level}")
        if not self.fitness_scale > 0:
            raise ValueError(f"fitness_scale must be > 0, got {self.fitness_scale}")


@dataclass(frozen=True)
class PdMatrix:
    temptation: float = 5.0
    reward: float = 3.0
    punishment: float = 1.0
    sucker: float = 0.0

    def __post_init__(self):
        if not self.temptation > self.reward > self.punishment > self.sucker:
            raise ValueError(
                "PD matrix needs temptation > reward > punishment > sucker, got "
                f"{(self.temptation, self.reward, self.punishment, self.sucker)}"
            )

    def as_array(self) -> np.ndarray:
        """``m[own, other]`` payoff with 0 = defect, 1 = cooperate."""
        return np.array([[self.punishment, self.temptation], [self.sucker, self.reward]])


@dataclass(frozen=True)
class EntitativeProgram:
    entitativity: Entitativity
    ingroup_rule: Rule | None = None
    outgroup_rule: Rule | None = None
    unified_rule: Rule | None = None

    def __post_init__(self):
        if self.entitativity == Entitativity.GROUP:
            if self.ingroup_rule is None or self.outgroup_rule is None or self.unified_rule is not None:
                raise ValueError("group-entitative programs carry exactly an in-group and an out-group rule")
        elif self.ingroup_rule is not None or self.outgroup_rule is not None or self.unified_rule is None:
            raise ValueError("individual-entitative programs carry exactly one unified rule")

    @property
    def code(self) -> int:
        if self.entitativity == Entitativity.GROUP:
            return int(self.ingroup_rule) * 4 + int(self.outgroup_rule)
        return 16 + int(self.unified_rule)

    @classmethod
    def from_code(cls, code: int) -> "EntitativeProgram":
        code = int(code)
        if 0 <= code < 16:
            return cls(Entitativity.GROUP, ingroup_rule=Rule(code // 4), outgroup_rule=Rule(code % 4))
        if 16 <= code < 20:
            return cls(Entitativity.INDIVIDUAL, unified_rule=Rule(code - 16))
        raise ValueError(f"no entitative program has code {code}")

    @property
    def label(self) -> str:
        if self.entitativity == Entitativity.GROUP:
            return f"G:{RULE_LABELS[self.ingroup_rule]}/{RULE_LABELS[self.outgroup_rule]}"
        return f"I:{RULE_LABELS[self.unified_rule]}"


N_PROGRAMS = 20


@dataclass
class InteractionMemory:
    """Last action received, per opponent group and per opponent individual."""

    by_group: dict[int, Action] = field(default_factory=dict)
    by_individual: dict[int, Action] = field(default_factory=dict)
    default: Action = Action.COOPERATE

    def last_from_group(self, tag: int) -> Action:
        return self.by_group.get(tag, self.default)

    def last_from(self, opponent_id: int) -> Action:
        return self.by_individual.get(opponent_id, self.default)

    def remember(self, opponent_id: int, opponent_tag: int, action: Action) -> None:
        self.by_group[opponent_tag] = Action(action)
        self.by_individual[opponent_id] = Action(action)


# ---------------------------------------------------------------------------
# strategy universes


def pgg_code(coop: CooperationStrategy, punish: PunishmentStrategy) -> int:
    return int(coop) * N_PUNISH + int(punish)


def split_pgg_code(code) -> tuple[CooperationStrategy, PunishmentStrategy]:
    return CooperationStrategy(int(code) // N_PUNISH), PunishmentStrategy(int(code) % N_PUNISH)


def pgg_universe(
    coop: Iterable[CooperationStrategy], punish: Iterable[PunishmentStrategy] = tuple(PunishmentStrategy)
) -> np.ndarray:
    codes = sorted({pgg_code(c, p) for c in coop for p in punish})
    return np.array(codes, dtype=np.int64)


REPUTATION_UNIVERSE = pgg_universe(
    [
        CooperationStrategy.COOPERATE,
        CooperationStrategy.DEFECT,
        CooperationStrategy.OPPORTUNISTIC_COOPERATE,
        CooperationStrategy.OPPORTUNISTIC_DEFECT,
    ]
)
VISIBLE_UNIVERSE = pgg_universe(
    [CooperationStrategy.COOPERATE, CooperationStrategy.DEFECT, CooperationStrategy.OPPORTUNIST]
)
ENTITATIVE_UNIVERSE = np.arange(N_PROGRAMS, dtype=np.int64)


def pgg_label(code) -> str:
    c, p = split_pgg_code(code)
    return f"{COOP_LABELS[c]}-{PUNISH_LABELS[p]}"


# ---------------------------------------------------------------------------
# public goods game


def pgg_payoffs(cooperator_count: int, params: PggParams) -> tuple[float, float]:
    """(cooperator payoff, defector payoff) when ``cooperator_count`` of k contribute."""
    k = params.group_size
    if not 0 <= cooperator_count <= k:
        raise ValueError(f"cooperator_count must lie in [0, {k}], got {cooperator_count}")
    share = params.benefit_factor * params.contribution * cooperator_count / k
    return share - params.contribution, share


def _reputation_counts(reputations: Iterable[PunishmentStrategy]) -> tuple[int, int, int]:
    reps = [PunishmentStrategy(r) for r in reputations]
    if not reps:
        raise ValueError("opportunistic choice needs at least one reputation")
    n_d = sum(PUNISHES_WITHHOLD[r] for r in reps)
    n_c = sum(PUNISHES_CONTRIBUTE[r] for r in reps)
    return int(n_d), int(n_c), len(reps)


def opportunist_contributes(n_punish_withhold, n_punish_contribute, n_observed, contribution, penalty):
    """Contribute iff -c - rho*P[punish contributors] > -rho*P[punish withholders].

    Multiplied through by the number of reputations seen, so counts compare
    exactly; an exact tie withholds.
    """
    return penalty * (np.asarray(n_punish_withhold) - n_punish_contribute) > contribution * np.asarray(n_observed)


def opportunistic_choice(reputations: Iterable[PunishmentStrategy], params: PggParams) -> Action:
    """Expected-payoff choice against the empirical mix of punisher reputations."""
    n_d, n_c, n = _reputation_counts(reputations)
    if opportunist_contributes(n_d, n_c, n, params.contribution, params.punish_penalty):
        return Action.CONTRIBUTE
    return Action.WITHHOLD


def resolve_contribution(strategy: CooperationStrategy, observer_reputation, params: PggParams) -> Action:
    """Decide Contribute/Withhold.

    ``observer_reputation`` is None (no information), a single
    PunishmentStrategy, or an iterable of them (neighbor reputations).
    """
    strategy = CooperationStrategy(strategy)
    if strategy == CooperationStrategy.COOPERATE:
        return Action.CONTRIBUTE
    if strategy == CooperationStrategy.DEFECT:
        return Action.WITHHOLD
    if observer_reputation is None:
        if strategy == CooperationStrategy.OPPORTUNISTIC_COOPERATE:
            return Action.CONTRIBUTE
        if strategy == CooperationStrategy.OPPORTUNISTIC_DEFECT:
            return Action.WITHHOLD
        raise ConfigurationError("Opportunist needs reputation information, which this model did not supply")
    if isinstance(observer_reputation, (int, PunishmentStrategy)):
        observer_reputation = [observer_reputation]
    return opportunistic_choice(observer_reputation, params)


def punishes(punisher: PunishmentStrategy, target_action: Action) -> bool:
    if target_action == Action.CONTRIBUTE:
        return bool(PUNISHES_CONTRIBUTE[punisher])
    return bool(PUNISHES_WITHHOLD[punisher])


def apply_punishment(target_action: Action, punisher: PunishmentStrategy, params: PggParams) -> tuple[float, float]:
    """(punisher delta, target delta): (-lambda, -rho) if the punisher fires, else (0, 0)."""
    if punishes(PunishmentStrategy(punisher), Action(target_action)):
        return -params.punish_cost, -params.punish_penalty
    return 0.0, 0.0


@dataclass(frozen=True)
class RoundOutcome:
    actions: tuple[Action, Action]
    player_deltas: tuple[float, float]
    observer_deltas: tuple[float, float]


def pairwise_dilemma_round(
    strategies: tuple[CooperationStrategy, CooperationStrategy],
    observer_reputations: tuple[PunishmentStrategy, PunishmentStrategy],
    params: PggParams,
    *,
    players: tuple[int, int] = (0, 1),
    observers: tuple[int, int] = (2, 3),
    neighbor_reputations: tuple | None = None,
) -> RoundOutcome:
    """One k=2 cooperation dilemma followed by third-party punishment.

    ``observers[i]`` watches ``players[i]`` and punishes according to
    ``observer_reputations[i]``. Opportunists decide from
    ``neighbor_reputations[i]``.
    """
    for obs in observers:
        if obs in players:
            raise ConfigurationError(f"observer {obs} is one of the players {players}")
    if params.group_size != 2:
        params = PggParams(**{**params.__dict__, "group_size": 2})

    actions = []
    for i, strat in enumerate(strategies):
        info = None if neighbor_reputations is None else neighbor_reputations[i]
        actions.append(resolve_contribution(strat, info, params))
    coop_pay, defect_pay = pgg_payoffs(sum(actions), params)

    player_deltas = [coop_pay if a == Action.CONTRIBUTE else defect_pay for a in actions]
    observer_deltas = [0.0, 0.0]
    for i in range(2):
        pd, td = apply_punishment(actions[i], observer_reputations[i], params)
        observer_deltas[i] += pd
        player_deltas[i] += td
    return RoundOutcome(tuple(actions), tuple(player_deltas), tuple(observer_deltas))


# ---------------------------------------------------------------------------
# threat


def fitness(total_payoff, params: ThreatParams):
    """1 - exp(-scale * p), computed via expm1 so small payoffs keep full precision."""
    out = -np.expm1(-params.fitness_scale * np.asarray(total_payoff, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# entitative iterated PD


def _apply_rule(rule: Rule, remembered: Action) -> Action:
    if rule == Rule.ALLC:
        return Action.COOPERATE
    if rule == Rule.ALLD:
        return Action.DEFECT
    if rule == Rule.TFT:
        return Action(remembered)
    return Action(1 - int(remembered))


def entitative_action(
    program: EntitativeProgram, own_tag: int, opponent_id: int, opponent_tag: int, memory: InteractionMemory
) -> Action:
    if program.entitativity == Entitativity.GROUP:
        rule = program.ingroup_rule if own_tag == opponent_tag else program.outgroup_rule
        return _apply_rule(rule, memory.last_from_group(opponent_tag))
    return _apply_rule(program.unified_rule, memory.last_from(opponent_id))


def pd_payoffs(actions: tuple[Action, Action], matrix: PdMatrix) -> tuple[float, float]:
    m = matrix.as_array()
    a, b = int(actions[0]), int(actions[1])
    return float(m[a, b]), float(m[b, a])


# ---------------------------------------------------------------------------
# array versions used by the engine


def entitative_actions_vec(codes, own_tags, opp_tags, group_memory, individual_memory) -> np.ndarray:
    """Vectorized :func:`entitative_action`; memories are 0/1 arrays aligned with ``codes``."""
    codes = np.asarray(codes)
    is_group = codes < 16
    in_group = np.asarray(own_tags) == np.asarray(opp_tags)
    rule = np.where(is_group, np.where(in_group, codes // 4, codes % 4), codes - 16)
    remembered = np.where(is_group, group_memory, individual_memory).astype(np.int8)
    return np.choose(rule, [np.ones_like(remembered), np.zeros_like(remembered), remembered, 1 - remembered])


def opportunist_table(params: PggParams) -> np.ndarray:
    """Contribution choice of an informed opportunist, indexed by observer PunishmentStrategy."""
    return np.array([opportunistic_choice([p], params) == Action.CONTRIBUTE for p in PunishmentStrategy])

