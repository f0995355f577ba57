from __future__ import annotations

import io
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coinroute.engine import Network, SimConfig, WaveState, run_wave
from coinroute.routing import (FK, ISPA, MB, EmptyStoreError, PolicyConfig, Simulation, TrainingStore,
                               bootstrap, brute_force_path_cost, fk_decide, ispa_choice, ispa_decide, mb_decide,
                               read_decision_log, run_policy, write_decision_log)
from coinroute.topology import SOURCE_COUNTS, BenchmarkId, build_benchmark

SIM = SimConfig(window_waves=20, warmup_waves=60, measure_waves=100)


def spec(family, variant, loads):
    return build_benchmark(BenchmarkId(family, variant), loads)


def test_ispa_zero_load_hex_net_b_takes_crossing():
    net = Network(spec("Hex", "NetB", 1))
    state = WaveState.initial(net, 5)
    assert ispa_decide(net, state, ("S", "D")) == "L_cheap"
    assert ispa_decide(net, state, ("L_cheap", "D")) == "bridge"
    k = net.pair_of(("S", "D"))
    _, cost = ispa_choice(net, state, k, random.Random(0))
    assert cost == brute_force_path_cost(net, state, ("S", "D")) == 10.0


def test_ispa_symmetric_hex_net_a_splits_evenly():
    res = Simulation(spec("Hex", "NetA", 1), SimConfig(20, 0, 2000), PolicyConfig(ISPA, seed=3)).run()
    chosen = [r.chosen for r in res.log if r.router == "S"]
    share = chosen.count("L_cheap") / len(chosen)
    assert 0.45 < share < 0.55


def test_ispa_bootes4_net_b_1_1_uses_v3():
    res = Simulation(spec("Bootes4", "NetB", (1, 1)), SIM, PolicyConfig(ISPA, seed=1)).run()
    assert {r.chosen for r in res.log[-50:] if r.router == "S1"} == {"V3"}
    assert res.cell.mean == pytest.approx(20.35, abs=0.01)


@pytest.mark.parametrize("family", ["Hex", "HexLog", "Bootes2", "Bootes4", "Butterfly", "Ray"])
def test_ispa_matches_brute_force_every_wave(family):
    loads = (3,) * SOURCE_COUNTS[family]
    sim = Simulation(spec(family, "NetB", loads), SIM, PolicyConfig(ISPA, seed=2), check_ispa=True)
    res = sim.run()
    assert res.ispa_violations == []
    assert len(res.log) > 100


@pytest.mark.parametrize("family", ["Hex", "HexLog", "Bootes4", "Butterfly", "Ray"])
def test_fk_decisions_are_factored(family):
    loads = (2,) * SOURCE_COUNTS[family]
    res = Simulation(spec(family, "NetB", loads), SIM, PolicyConfig(FK, seed=4), check_factored=True).run()
    assert res.factored_checks > 100
    assert res.factored_violations == []


def test_fk_bootes4_avoids_braess():
    s = spec("Bootes4", "NetB", (2, 2))
    fk = run_policy(s, SimConfig(), PolicyConfig(FK, seed=0)).mean
    ispa = run_policy(s, SimConfig(), PolicyConfig(ISPA, seed=0)).mean
    assert ispa == pytest.approx(40.55, abs=0.01)
    assert fk < 35.6


def test_fk_hex_net_b_load_1_crossing():
    net = Network(spec("Hex", "NetB", 1))
    state = WaveState.initial(net, 5)
    assert fk_decide(net, state, ("S", "D"), {("L_cheap", "D"): "bridge"}) == "L_cheap"
    assert fk_decide(net, state, ("L_cheap", "D"), {("S", "D"): "L_cheap"}, amount=1.0) == "bridge"


def test_single_option_node():
    net = Network(spec("Bootes4", "NetA", (1, 1)))
    state = WaveState.initial(net, 5)
    assert fk_decide(net, state, ("S1", "D")) == "S1_dummy"
    assert ispa_decide(net, state, ("S1", "D")) == "S1_dummy"


def test_no_path_is_an_error():
    net = Network(spec("Bootes4", "NetA", (1, 1)))
    with pytest.raises(KeyError):
        net.pair_of(("D", "S1"))


def test_training_store_contract():
    store = TrainingStore()
    with pytest.raises(EmptyStoreError):
        store.nearest(("A", "D"), [0.0])
    store.add(("A", "D"), [1.0, 0.0], 5.0)
    store.add(("A", "D"), [0.0, 1.0], 7.0)
    # exactly equidistant: the earlier example wins
    assert store.nearest(("A", "D"), [0.5, 0.5]) == (0, 5.0)
    assert store.nearest(("A", "D"), [0.1, 0.9]) == (1, 7.0)
    with pytest.raises(ValueError):
        store.add(("A", "D"), [1.0], 1.0)
    with pytest.raises(ValueError):
        store.add(("A", "D"), [np.nan, 1.0], 1.0)
    for i in range(40):
        store.add(("A", "D"), [i, i], float(i))
    ex = store.examples(("A", "D"))
    assert len(ex) == 42 and ex[0].input == (1.0, 0.0) and ex[-1].output == 39.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(-50, 50)), min_size=1, max_size=30),
       st.tuples(st.floats(0, 10), st.floats(0, 10)))
def test_nearest_is_brute_force_nearest(examples, query):
    store = TrainingStore()
    for a, b, y in examples:
        store.add(("R", "D"), [a, b], y)
    d = [(a - query[0]) ** 2 + (b - query[1]) ** 2 for a, b, _ in examples]
    i, y = store.nearest(("R", "D"), query)
    assert d[i] == min(d) and i == d.index(min(d)) and y == examples[i][2]


def test_mb_single_example_store_is_a_tie_break():
    s = spec("Hex", "NetB", 2)
    net = Network(s)
    state = WaveState.initial(net, 5)
    store = TrainingStore()
    store.add(("S", "D"), [0.0, 0.0], 3.0)
    picks = {mb_decide(net, state, store, ("S", "D"), 0.0, random.Random(i), {("L_cheap", "D"): "bridge"})
             for i in range(40)}
    assert picks == {"L_cheap", "R_exp"}


def test_mb_empty_store_errors():
    net = Network(spec("Hex", "NetB", 2))
    state = WaveState.initial(net, 5)
    with pytest.raises(EmptyStoreError, match="bootstrap"):
        mb_decide(net, state, TrainingStore(), ("S", "D"), 0.0, random.Random(0))


def test_bootstrap_one_wave():
    store = bootstrap(spec("Hex", "NetB", 1), SIM, PolicyConfig(MB, bootstrap_waves=1))
    assert store.count(("S", "D")) == 1


def test_bootstrap_clusters_near_ispa_loads():
    s = spec("Hex", "NetB", 4)
    store = bootstrap(s, SIM, PolicyConfig(MB, bootstrap_waves=100))
    res = Simulation(s, SIM, PolicyConfig(ISPA, bootstrap_waves=100)).run()
    inputs = np.array([e.input for e in store.examples(("S", "D"))])
    net = Network(s)
    ispa_links = res.state.link_load[list(net.out_edges[net.index["S"]])]
    assert inputs.shape == (100, 2)
    assert np.all(np.abs(inputs[50:].mean(axis=0) - ispa_links) < 1.0)


def test_store_grows_one_example_per_decision():
    res = Simulation(spec("Butterfly", "NetB", (1, 2, 1)), SIM, PolicyConfig(MB, seed=5, bootstrap_waves=30)).run()
    after = [r for r in res.log if r.wave > 30]
    assert len(res.store) == res.bootstrap_size + len(after)
    assert res.bootstrap_size == len([r for r in res.log if r.wave <= 30])


def test_steering_one_equals_fk_log():
    s = spec("Ray", "NetB", (3, 3))
    a = Simulation(s, SIM, PolicyConfig(MB, steering=1.0, seed=9)).run()
    b = Simulation(s, SIM, PolicyConfig(FK, seed=9)).run()
    strip = lambda log: [(r.wave, r.router, r.dest, r.chosen, r.estimate) for r in log]
    assert strip(a.log) == strip(b.log)
    assert a.cell == b.cell


@pytest.mark.parametrize("policy", [ISPA, FK, MB])
def test_determinism(policy):
    s = spec("Hex", "NetB", 4)
    a = Simulation(s, SIM, PolicyConfig(policy, seed=11)).run()
    b = Simulation(s, SIM, PolicyConfig(policy, seed=11)).run()
    assert a.log == b.log and a.cell == b.cell


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig("SPF")
    with pytest.raises(ValueError):
        PolicyConfig(MB, steering=1.5)
    with pytest.raises(ValueError):
        PolicyConfig(MB, bootstrap_waves=0)


def test_run_policy_examples():
    full = SimConfig()
    assert run_policy(spec("Hex", "NetA", 2), full, PolicyConfig(ISPA, seed=0)).mean == pytest.approx(61.0, abs=0.05)
    assert run_policy(spec("Hex", "NetB", 2), full, PolicyConfig(ISPA, seed=0)).mean == pytest.approx(52.0, abs=0.05)
    for policy in (ISPA, FK, MB):
        cell = run_policy(spec("Bootes4", "NetA", (6, 3)), SIM, PolicyConfig(policy, seed=0))
        assert cell.mean == pytest.approx(44.63, abs=0.05)


def test_decision_log_round_trip():
    res = Simulation(spec("Hex", "NetB", 3), SIM, PolicyConfig(MB, seed=1)).run()
    buf = io.StringIO()
    write_decision_log(res.log, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "wave,router,dest,policy,chosen,estimate"
    assert read_decision_log(io.StringIO(text)) == res.log
    assert {r.policy for r in res.log} >= {ISPA, MB, "MB/FK"}
