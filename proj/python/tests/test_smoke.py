import json
import math
import random

import pytest

import curling_dt as cd


def test_builtin_trees_are_listed_and_valid():
    names = cd.builtin_tree_names()
    for n in ("tree_I", "tree_II", "tree_III", "human_design"):
        assert n in names
        assert cd.validate_tree(cd.builtin_tree(n)) == []
    assert cd.semantically_equal("tree_I", cd.builtin_tree("tree_I"))
    assert not cd.semantically_equal("tree_I", "tree_II")


def test_invalid_tree_reports_diagnostics():
    bad = json.dumps({"name": "x", "root": "n0", "nodes": {
        "n0": {"type": "condition", "feature": "stones_near_button", "op": "<", "value": 1,
               "true": "n1", "false": "n1"}}})
    diags = cd.validate_tree(bad)
    assert diags
    assert any("unknown_feature" in d for d in diags)


def test_play_is_deterministic_and_complete():
    a = cd.play("tree_III", "tree_I", seed=4)
    b = cd.play("tree_III", "tree_I", seed=4)
    assert a == b
    trace = json.loads(a)
    assert len(trace["throws"]) == 16
    assert trace["meta"]["seed"] == 4
    assert {t["game"] for t in trace["throws"]} == {1, 2}


def test_score_game_counts_stones_inside_the_opponent_best():
    stones = [("A", 5.0, 25.0), ("A", 5.5, 25.0), ("B", 5.0, 26.0), ("A", 5.0, 27.5)]
    assert cd.score_game(stones) == ("A", 2)
    assert cd.score_game([]) == (None, 0)
    far = [("A", 5.0, 29.0), ("B", 9.5, 29.5)]
    assert cd.score_game(far, bounded=True) == (None, 0)
    assert cd.score_game(far, bounded=False) == ("A", 1)


def closed_form(r, v, gamma, lam):
    n = len(r)
    delta = [r[t] + gamma * (v[t + 1] if t + 1 < n else 0.0) - v[t] for t in range(n)]
    return [sum((gamma * lam) ** (k - t) * delta[k] for k in range(t, n)) for t in range(n)]


def test_gae_matches_closed_form():
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(1, 30)
        r = [rng.gauss(0, 1) for _ in range(n)]
        v = [rng.gauss(0, 1) for _ in range(n)]
        g, lam = rng.random(), rng.random()
        adv, ret = cd.gae(r, v, g, lam)
        want = closed_form(r, v, g, lam)
        assert adv == pytest.approx(want, abs=1e-9)
        assert ret == pytest.approx([a + b for a, b in zip(want, v)], abs=1e-9)


def test_observation_round_trip():
    stones = [("A", 5.0 + 1 / 6, 25.0 + 1 / 6), ("B", 1 / 6, 20.0 + 1 / 6)]
    grid, found = cd.observe(stones, viewer="A")
    assert len(grid) == 30 and all(len(row) == 30 for row in grid)
    assert sorted(found, key=lambda d: (d[1], d[2])) == [(False, 0, 0), (True, 15, 15)]


def test_evaluate_tallies_every_match():
    s = cd.evaluate("tree_I", "tree_I", n=20, seed=2)
    assert s["wins"] + s["losses"] + s["draws"] == 20
    assert 0.0 <= s["win_rate"] <= 1.0


def test_tiny_training_run():
    cfg = json.dumps({"trainer": {"num_actors": 1, "single_threaded": True, "buffer_capacity": 256,
                                  "hidden": [16], "eval_matches": 4, "eval_interval_throws": 800,
                                  "max_env_throws": 800}})
    r = cd.train("far_corner", cfg, seed=1)
    assert r["verdict"] in ("flaw_found", "no_flaw_found")
    assert r["curve"][0][0] == 16
    assert all(math.isfinite(w) for _, w in r["curve"])
    assert json.loads(r["checkpoint"])


def test_bad_config_raises():
    with pytest.raises(ValueError):
        cd.train("tree_I", '{"trainer": {"bogus": 1}}')
