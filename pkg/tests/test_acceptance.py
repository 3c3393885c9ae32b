"""Acceptance criteria 1-9, each at its stated scale and tolerance.

Every test records one PASS/FAIL line (see conftest) before asserting, so
the summary at the end of a pytest run lists all nine criteria.
"""

import subprocess
import sys
from pathlib import Path

import mpmath
import numpy as np
import pytest
from scipy.stats import spearmanr

from normsim import games
from normsim.config import ModelConfig
from normsim.dynamics import FermiParams, fermi_switch_probability, replicator_trajectory
from normsim.engine import run_simulation
from normsim.games import Action, PdMatrix, PggParams, PunishmentStrategy, ThreatParams
from normsim.harness import SweepSpec, emit_csv, emit_run_csv, run_sweep
from normsim.topology import make_small_world, strength_of_ties

pytestmark = pytest.mark.acceptance

mpmath.mp.dps = 60
TESTS_DIR = Path(__file__).parent


def rel_err(got, want) -> float:
    want = mpmath.mpf(want)
    if want == 0:
        return 0.0 if got == 0 else float("inf")
    return float(abs((mpmath.mpf(got) - want) / want))


def spearman(x, y) -> float:
    return float(spearmanr(x, y)[0])


# ---------------------------------------------------------------------------
# 1. formula exactness


def test_criterion_1_formula_exactness(report):
    rng = np.random.default_rng(20261016)
    n = 200
    worst = {}

    errs = []
    for _ in range(n):
        own, nbr, s = rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(0, 10)
        want = 1 / (1 + mpmath.exp(mpmath.mpf(s) * (mpmath.mpf(own) - mpmath.mpf(nbr))))
        errs.append(rel_err(fermi_switch_probability(own, nbr, FermiParams(s)), want))
    worst["fermi_switch_probability"] = max(errs)

    errs = []
    for _ in range(n):
        k = int(rng.integers(1, 11))
        params = PggParams(k, rng.uniform(0.1, 10), rng.uniform(1.01, 10), 1.0, 3.0)
        m = int(rng.integers(0, k + 1))
        b, c = mpmath.mpf(params.benefit_factor), mpmath.mpf(params.contribution)
        share = b * c * m / k
        got_c, got_d = games.pgg_payoffs(m, params)
        errs += [rel_err(got_c, share - c), rel_err(got_d, share)]
    worst["pgg_payoffs"] = max(errs)

    errs = []
    for _ in range(n):
        lam = rng.uniform(0.01, 5)
        params = PggParams(5, 1.0, 3.0, lam, lam + rng.uniform(0.01, 5))
        action = Action(int(rng.integers(0, 2)))
        punisher = PunishmentStrategy(int(rng.integers(0, 4)))
        fires = {
            PunishmentStrategy.RESPONSIBLE: action == Action.WITHHOLD,
            PunishmentStrategy.ANTISOCIAL: action == Action.CONTRIBUTE,
            PunishmentStrategy.SPITEFUL: True,
            PunishmentStrategy.NON_PUNISHER: False,
        }[punisher]
        want = (-mpmath.mpf(params.punish_cost), -mpmath.mpf(params.punish_penalty)) if fires else (0, 0)
        got = games.apply_punishment(action, punisher, params)
        errs += [rel_err(got[0], want[0]), rel_err(got[1], want[1])]
    worst["apply_punishment"] = max(errs)

    errs = []
    for _ in range(n):
        p, scale = rng.uniform(-50, 300), rng.uniform(0.01, 1)
        want = -mpmath.expm1(-mpmath.mpf(scale) * mpmath.mpf(p))
        errs.append(rel_err(games.fitness(p, ThreatParams(fitness_scale=scale)), want))
    worst["fitness"] = max(errs)

    errs = []
    for i in range(n):
        g = make_small_world(30, 2 * int(rng.integers(1, 6)), rng.uniform(0, 1), np.random.default_rng(i))
        node = int(rng.integers(0, 30))
        errs.append(rel_err(strength_of_ties(g, node), 1 / mpmath.mpf(int(g.degree[node]))))
    worst["strength_of_ties"] = max(errs)

    errs = []
    for _ in range(n):
        vals = np.sort(rng.uniform(-10, 10, size=4))[::-1]
        matrix = PdMatrix(*vals)
        a, b = Action(int(rng.integers(0, 2))), Action(int(rng.integers(0, 2)))
        t, r, p, s = (mpmath.mpf(v) for v in vals)
        table = {(1, 1): (r, r), (0, 0): (p, p), (1, 0): (s, t), (0, 1): (t, s)}
        want = table[int(a), int(b)]
        got = games.pd_payoffs((a, b), matrix)
        errs += [rel_err(got[0], want[0]), rel_err(got[1], want[1])]
    worst["pd_payoffs"] = max(errs)

    ok = all(e <= 1e-12 for e in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(1, ok, f"max relative error over {n} inputs each: {detail} (tolerance 1e-12)")
    assert ok


# ---------------------------------------------------------------------------
# 2. replicator oracle


def euler_reference(x, a, horizon, step):
    x = np.array(x, dtype=float)
    for _ in range(int(round(horizon / step))):
        pi = a @ x
        x = x + step * x * (pi - x @ pi)
        x /= x.sum()
    return x


def test_criterion_2_replicator_oracle(report):
    rng = np.random.default_rng(50)
    worst = 0.0
    for _ in range(5):
        a = rng.uniform(-1, 1, size=(3, 3))
        x0 = rng.dirichlet(np.ones(3))
        end = replicator_trajectory(x0, a, 50)[-1]
        worst = max(worst, float(np.abs(end - euler_reference(x0, a, 50, 1e-4)).max()))
    pd = np.array([[3.0, 0.0], [5.0, 1.0]])
    dominant = float(replicator_trajectory([0.5, 0.5], pd, 200)[-1, 1])
    ok = worst <= 1e-4 and dominant > 1 - 1e-6
    report(2, ok, f"max endpoint gap vs 10x finer oracle {worst:.2e} (<= 1e-4); dominant share {dominant:.9f} (> 1-1e-6)")
    assert ok


# ---------------------------------------------------------------------------
# 3. and 4. the public goods game with and without punishment/reputation


def test_criterion_3_baseline_collapse(report):
    cfg = ModelConfig.for_family("pgg", cooperation=("C", "D"), punishment=("N",), generations=2000)
    res = run_sweep(SweepSpec("iota", (cfg.iota,), 10, cfg, seed_base=3000))
    defectors = float(res.column("D-N")[0])
    ok = defectors >= 0.9
    report(3, ok, f"mean long-run defector proportion {defectors:.4f} (>= 0.9)")
    assert ok


def test_criterion_4_reputation_rescue(report):
    cfg = ModelConfig.for_family("pgg", iota=0.9, generations=2000)
    res = run_sweep(SweepSpec("iota", (0.9,), 10, cfg, seed_base=4000))
    coop = float(res.column("cooperation_rate")[0])
    classes = ["punish:R", "punish:A", "punish:S", "punish:N"]
    modal_r = sum(max(classes, key=run.__getitem__) == "punish:R" for run in res.per_run[0])
    ok = coop >= 0.5 and modal_r >= 7
    report(4, ok, f"mean long-run cooperation {coop:.4f} (>= 0.5); Responsible modal in {modal_r}/10 seeds (>= 7)")
    assert ok


# ---------------------------------------------------------------------------
# 5.-7. directional sweeps


def third_party_base():
    return ModelConfig.for_family(
        "third_party", size=200, generations=1000, c=1.0, lam=1.0, rho=3.0, mu=0.01, s=0.5
    )


def test_criterion_5_ties_and_mobility(report):
    base = third_party_base()
    degrees = (2, 4, 8, 16)
    a = run_sweep(SweepSpec("mean_degree", degrees, 20, base.replace(m=0.0), seed_base=5000))
    mobility = (0.0, 0.01, 0.05, 0.2, 0.5)
    b = run_sweep(SweepSpec("m", mobility, 20, base.replace(mean_degree=4), seed_base=5100))
    rho = {
        "degree/R": spearman(degrees, a.column("punish:R")),
        "degree/coop": spearman(degrees, a.column("cooperation_rate")),
        "m/R": spearman(mobility, b.column("punish:R")),
        "m/coop": spearman(mobility, b.column("cooperation_rate")),
    }
    ok = all(v <= -0.8 for v in rho.values())
    detail = ", ".join(f"{k} {v:+.2f}" for k, v in rho.items())
    means = (f"R by degree {np.round(a.column('punish:R'), 3).tolist()}, "
             f"R by m {np.round(b.column('punish:R'), 3).tolist()}")
    report(5, ok, f"Spearman {detail} (all <= -0.8); {means}")
    assert ok


def test_criterion_6_threat(report):
    cfg = ModelConfig.for_family("threat", lam=0.5, rho=1.5, mu=0.1, base_pay=30.0, generations=2000)
    taus = (0.0, 10.0, 20.0, 25.0)
    res = run_sweep(SweepSpec("tau", taus, 10, cfg, seed_base=6000))
    coop = res.column("cooperation_rate")
    resp = res.column("punish:R")
    r_coop, r_resp = spearman(taus, coop), spearman(taus, resp)
    ok = r_coop >= 0.8 and r_resp >= 0.8
    report(6, ok, f"Spearman cooperation {r_coop:+.2f}, responsible {r_resp:+.2f} (both >= +0.8); "
                  f"cooperation {np.round(coop, 3).tolist()}, responsible {np.round(resp, 3).tolist()}")
    assert ok


def test_criterion_7_ethnocentrism(report):
    cfg = ModelConfig.for_family("ethnocentrism", n_groups=4, mu=0.01, s=0.5, generations=5000)
    mobility = (0.0, 0.1, 0.3, 0.6, 1.0)
    res = run_sweep(SweepSpec("m", mobility, 10, cfg, seed_base=7000))
    ge = res.column("group_entitative")
    r_ge = spearman(mobility, ge)
    at_zero = res.per_run[0]
    more_out = sum(run["outgroup_defection"] > run["ingroup_defection"] for run in at_zero)
    ok = r_ge <= -0.8 and more_out >= 8
    report(7, ok, f"Spearman group-entitative vs m {r_ge:+.2f} (<= -0.8), means {np.round(ge, 3).tolist()}; "
                  f"out-group defection rate above in-group in {more_out}/10 seeds at m=0 (>= 8)")
    assert ok


# ---------------------------------------------------------------------------
# 8. determinism


def test_criterion_8_determinism(report, tmp_path):
    cfg = ModelConfig.for_family("third_party", size=100, generations=150)
    for name in ("a", "b"):
        records = run_simulation(cfg, 42)
        emit_run_csv(records, cfg.strategy_labels(), tmp_path / f"run_{name}.csv")
    same_run = (tmp_path / "run_a.csv").read_bytes() == (tmp_path / "run_b.csv").read_bytes()

    spec = SweepSpec("m", (0.0, 0.1, 0.2, 0.4, 0.7, 1.0), 2, cfg, seed_base=8000)
    outputs = {}
    for label, workers in (("serial", 1), ("serial_again", 1), ("parallel", 8)):
        emit_csv(run_sweep(spec, workers), tmp_path / f"{label}.csv")
        outputs[label] = (tmp_path / f"{label}.csv").read_bytes()
    same_sweep = outputs["serial"] == outputs["serial_again"] == outputs["parallel"]
    ok = same_run and same_sweep
    report(8, ok, f"repeat run CSV identical: {same_run}; 6-point sweep CSV identical at parallelism 1, 1, 8: {same_sweep}")
    assert ok


# ---------------------------------------------------------------------------
# 9. invariant suite


def test_criterion_9_invariants(report):
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-m", "invariant", "-q", "-p", "no:cacheprovider", str(TESTS_DIR)],
        capture_output=True, text=True,
    )
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0
    report(9, ok, f"invariant property tests (1000 cases each): {tail}")
    assert ok, proc.stdout[-3000:]
