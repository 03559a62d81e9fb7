"""Smoke tests for the python bindings: import, call the main operations,
and run a couple of tiny training iterations."""

import json
import math

import pytest

import atpo


def test_metrics():
    assert atpo.shannon_entropy([0.25, 0.25, 0.25, 0.25]) == pytest.approx(math.log(4))
    assert atpo.shannon_entropy([1.0, 0.0]) == 0.0
    assert atpo.confidence_margin([0.7, 0.2, 0.1]) == pytest.approx(0.5)
    assert atpo.inverse_margin([0.5, 0.5]) == pytest.approx(1e6)
    assert atpo.kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    with pytest.raises(atpo.AtpoError):
        atpo.shannon_entropy([0.5, 0.6])


def test_roec_and_stats():
    assert atpo.roec_curve([1.0, 1.5, 0.9]) == pytest.approx([0.0, 0.5, 0.6])
    mean, std = atpo.curve_stats([0.0, 1.0])
    assert mean == pytest.approx(0.5)
    assert std == pytest.approx(0.5)


def test_selection():
    assert atpo.select_uniform(10, 4) == [0, 2, 5, 7, 10]
    roec = [0, 0.1, 0.1, 0.9, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1]
    entropy = [1.0]
    for r in roec[1:]:
        entropy.append(entropy[-1] + r)
    cminv = [1, 1, 1, 1, 1, 9, 1, 1, 1, 1]
    assert atpo.select_hybrid(entropy, cminv, 4) == [0, 3, 5, 6, 10]
    assert atpo.select_roec_only(entropy, cminv, 3) == [0, 3, 6, 10]
    assert atpo.select_cm_only([1.0] * 6, [1, 1, 9, 1, 8, 1], 3) == [0, 2, 4, 6]
    # flat curve falls back to the even partition
    assert atpo.select_hybrid([1.0] * 8, [1.0] * 8, 4) == atpo.select_uniform(8, 4)


def test_schedule_and_advantages():
    assert atpo.commit_schedule(5, 3) == [2, 2, 1]
    adv = atpo.group_advantages([1.0, 0.0, 1.0, 0.0])
    assert sum(adv) == pytest.approx(0.0, abs=1e-9)
    assert adv[0] == pytest.approx(1.0, rel=1e-6)
    assert atpo.group_advantages([0.5, 0.5]) == [0.0, 0.0]


def test_token_objective_clip():
    lp_old = -1.0
    lp_new = lp_old + math.log(1.5)
    assert atpo.token_objective(lp_new, lp_old, lp_old, 1.0, 0.2, 0.0) == pytest.approx(1.2)
    assert atpo.token_objective(lp_new, lp_old, lp_old, -1.0, 0.2, 0.0) == pytest.approx(-1.5)


def test_tasks():
    tasks = atpo.generate_tasks("sort", 5, 16, seed=7)
    assert len(tasks) == 5
    for prompt, gold in tasks:
        assert gold == "".join(sorted(prompt))
    assert atpo.generate_tasks("sort", 5, 16, seed=7) == tasks
    a, b = atpo.generate_tasks("sum", 1, 16, seed=3)[0]
    x, y = a.split("+")
    assert int(b) == int(x) + int(y)


def test_trainer_runs_and_is_deterministic():
    cfg = atpo.TrainConfig(json.dumps({
        "task": "copy", "T": 4, "N": 2, "L": 8, "P": 6, "dim": 16,
        "group_size": 2, "batch_prompts": 2, "iterations": 2, "seed": 5,
    }))
    t1, t2 = atpo.Trainer(cfg), atpo.Trainer(cfg)
    m1 = [t1.run_iteration() for _ in range(2)]
    m2 = [t2.run_iteration() for _ in range(2)]
    for a, b in zip(m1, m2):
        assert a["loss"] == b["loss"]
        assert a["boundaries"] == b["boundaries"]
        assert math.isfinite(a["loss"])
    e1, e2 = t1.evaluate(8), t2.evaluate(8)
    assert e1.mean_reward == e2.mean_reward
    traces = t1.last_traces()
    assert len(traces) == 4
    covered = sorted(p for s in traces[0]["steps"] for p in s["transfer"])
    assert covered == list(range(8))


def test_bad_config_raises():
    with pytest.raises(atpo.AtpoError):
        atpo.TrainConfig('{"unknown_key": 1}')
    with pytest.raises(atpo.AtpoError):
        atpo.TrainConfig('{"N": 99}')
