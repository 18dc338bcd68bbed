import json

import pytest
from hypothesis import given, settings, strategies as st

from vcubecast import ConfigError, CrashSchedule
from vcubecast.harness import (
    Scenario,
    SuiteSpec,
    fault_table,
    load_config,
    read_tsv,
    run_many,
    run_scenario,
    run_suite,
    scenario_from_dict,
    suite_from_dict,
)


class TestScenario:
    def test_schedule_is_pure(self):
        a = Scenario(64, "atree-b", 4, crashes=5, seed=7)
        b = Scenario(64, "natree-b", 4, crashes=5, seed=7)
        assert a.schedule() == a.schedule() == b.schedule()
        assert a.schedule() != Scenario(64, "atree-b", 4, crashes=5, seed=8).schedule()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 7), st.integers(0, 10_000), st.sampled_from(["atree-b", "atree-r"]))
    def test_targets_and_window(self, crashes, seed, protocol):
        sc = Scenario(8, protocol, 2, crashes=crashes, seed=seed, crash_window=20.0)
        sched = sc.schedule()
        procs = sched.processes()
        assert len(procs) == len(set(procs)) == crashes
        assert all(0 <= t < 20.0 for _, t in sched.entries)
        if protocol.endswith("-b"):
            assert 0 not in procs
        # a source never dies before its first send
        assert all(t > 0 for p, t in sched.entries if p == 0)

    def test_best_effort_spares_sources(self):
        Scenario(4, "atree-b", crashes=3, seed=1).schedule()
        with pytest.raises(ConfigError):
            Scenario(4, "atree-b", sources=(0, 1), crashes=3, seed=1).schedule()

    def test_default_window_is_fault_free_span(self):
        sc = Scenario(8, "all-b", 1, crashes=2)
        # ATREE-B at n=8: last delivery at 3.2, then the ACKs climb three levels
        assert sc.window_ticks() == 6200

    def test_workload_rotates_sources(self):
        sc = Scenario(8, "atree-b", 3, sources=(1, 5))
        assert [w.source for w in sc.workload()] == [1, 5, 1]

    @pytest.mark.parametrize(
        "kw",
        [dict(protocol="flood"), dict(crashes=8), dict(sources=(9,)), dict(sources=()), dict(distribution="normal")],
    )
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            Scenario(8, **kw)


def test_run_scenario_reports_failures_per_row():
    # the only source dies mid-broadcast, so no latency can be measured
    res = run_scenario(Scenario(4, "atree-r", 1, schedule_override=CrashSchedule.of({0: 0.05})))
    assert res.error is not None
    table = read_tsv(fault_table({3: [res]}))
    assert table[0]["errors"] == 1


def test_run_many_reuses_identical_runs():
    scs = [Scenario(16, "atree-b", 2, seed=s) for s in range(3)]
    a, b, c = run_many(scs)
    assert a == b == c


def test_fault_free_sweep():
    tables = run_suite(SuiteSpec("fault-free-sweep", protocols=("atree-b",)))
    rows = read_tsv(tables["fault-free-sweep.atree-b.tsv"])
    assert [int(r["p"]) for r in rows] == [8, 16, 32, 64, 128, 256, 512, 1024]
    lat = [r["latency"] for r in rows]
    assert lat == sorted(lat)
    assert all(r["throughput"] == pytest.approx(1 / r["latency"], rel=1e-5) for r in rows)


def test_small_fault_sweep(tmp_path):
    spec = SuiteSpec("fault-sweep", n=32, crash_counts=(0, 2), seeds=4, messages=3)
    tables = run_suite(spec, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(tables)
    text = tables["fault-sweep.atree-b.tsv"]
    assert text.splitlines()[0] == "f\tlatency\tdesvpad2\tTREE\tACK\tNACK\tdesvpad1\terrors"
    rows = {int(r["f"]): r for r in read_tsv(text)}
    assert rows[0]["desvpad2"] == 0 and rows[0]["desvpad1"] == 0
    assert rows[0]["TREE"] == rows[0]["ACK"] == 3 * 31
    natree = {int(r["f"]): r for r in read_tsv(tables["fault-sweep.natree-b.tsv"])}
    assert natree[2]["TREE"] + natree[2]["NACK"] > rows[2]["TREE"]


def test_workers_do_not_change_output():
    spec = dict(suite="fault-sweep", n=16, crash_counts=(1,), seeds=3, messages=2, protocols=("atree-b",))
    assert run_suite(SuiteSpec(**spec)) == run_suite(SuiteSpec(**spec, workers=2))


def test_suite_validation():
    with pytest.raises(ConfigError):
        SuiteSpec("sweep")
    with pytest.raises(ConfigError):
        SuiteSpec("fault-sweep", protocols=("tree",))
    with pytest.raises(ConfigError):
        SuiteSpec("fault-sweep", seeds=0)


class TestConfig:
    def test_yaml_scenario(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text(
            "n: 16\nprotocol: atree-r\nmessages: 2\ncrashes: 1\nseed: 3\n"
            "timing: {t_s: 0.2, t_r: 0.1, t_t: 0.5}\ndetector: {test_interval: 2.0, timeout: 1.0}\n"
        )
        sc = scenario_from_dict(load_config(path))
        assert (sc.n, sc.protocol, sc.messages, sc.crashes, sc.seed) == (16, "atree-r", 2, 1, 3)
        assert sc.timing.t_s == 0.2
        assert sc.policy.test_interval == 2.0

    def test_json_with_explicit_schedule(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"n": 8, "protocol": "atree-b", "messages": 1, "crashes": 0, "seed": 0, "schedule": {"4": 0.0}}))
        sc = scenario_from_dict(load_config(path))
        assert sc.schedule() == CrashSchedule.of({4: 0.0})
        assert sc.crashes == 1

    def test_overrides(self):
        base = {"n": 8, "protocol": "atree-b", "messages": 1, "crashes": 0, "seed": 0}
        assert scenario_from_dict(base, n=32, seed=None).n == 32

    @pytest.mark.parametrize(
        "data",
        [
            {"n": 8, "protocol": "atree-b", "messages": 1, "crashes": 0},
            {"n": 8, "protocol": "atree-b", "messages": 1, "crashes": 0, "seed": 0, "colour": 1},
            {"n": 6, "protocol": "atree-b", "messages": 1, "crashes": 0, "seed": 0},
            {"n": 8, "protocol": "atree-b", "messages": 1, "crashes": 0, "seed": 0, "timing": {"t_x": 1}},
            {"n": 8, "protocol": "atree-b", "messages": 1, "crashes": 0, "seed": 0, "timing": {"t_s": 0.00001}},
        ],
    )
    def test_bad_scenarios(self, data):
        with pytest.raises(ConfigError):
            scenario_from_dict(data)

    def test_bad_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("n: [1\n")
        with pytest.raises(ConfigError):
            load_config(bad)
        scalar = tmp_path / "scalar.json"
        scalar.write_text("3")
        with pytest.raises(ConfigError):
            load_config(scalar)

    def test_suite_file(self):
        spec = suite_from_dict({"suite": "fault-sweep", "n": 64, "seeds": 5, "crash_counts": [0, 1]}, workers=2)
        assert (spec.n, spec.seeds, spec.crash_counts, spec.messages, spec.workers) == (64, 5, (0, 1), 10, 2)
        with pytest.raises(ConfigError):
            suite_from_dict({"n": 64})
        with pytest.raises(ConfigError):
            suite_from_dict({"suite": "fault-sweep", "bogus": 1})
