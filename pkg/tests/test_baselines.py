import pytest

from vcubecast import CrashSchedule, MessageId, run
from vcubecast.baselines import AllProcess, NatreeProcess
from vcubecast.messages import ACK, NACK, TREE, Message, Multicast, Send
from vcubecast.metrics import message_counts
from vcubecast.sim import AppBroadcast

M = MessageId(0, 1)


def sends(actions):
    out = []
    for a in actions:
        if isinstance(a, Send):
            out.append((a.to, a.kind))
        elif isinstance(a, Multicast):
            out += [(to, a.msg.kind) for to in a.targets]
    return out


class TestAll:
    def test_sends_to_everyone_in_order(self):
        assert sends(AllProcess(0, 8).broadcast()) == [(k, TREE) for k in range(1, 8)]

    def test_skips_known_crash(self):
        p = AllProcess(0, 8)
        p.view.remove(3)
        assert len(sends(p.broadcast())) == 6

    def test_crash_drops_pending_entry(self):
        p = AllProcess(0, 8)
        p.broadcast()
        assert p.on_crash(3) == []
        assert (None, 3, M) not in p.ack_set

    def test_receivers_never_forward(self):
        assert sends(AllProcess(5, 8).on_tree(0, M)) == [(0, ACK)]

    @pytest.mark.parametrize("n", [8, 512])
    def test_fault_free_count(self, n):
        trace = run(n, workload=[AppBroadcast(0.0, 0)], protocol="all-b", record=False)
        assert message_counts(trace) == (n - 1, n - 1, 0)
        assert trace.completions

    def test_reliable_relays_after_source_crash(self):
        # p0 dies after two sends; p1 and p2 relay to the rest
        trace = run(8, CrashSchedule.of({0: 0.2}), [AppBroadcast(0.0, 0)], "all-r")
        assert all(trace.delivered_by(p) == {M} for p in trace.correct_at_end())
        assert trace.quiescent


class TestNatreeFlood:
    def test_n4_build(self):
        trace = run(4, workload=[AppBroadcast(0.0, 0)], protocol="natree-b")
        tree, ack, nack = message_counts(trace)
        assert tree == 1 * 3 + 3 * 2
        assert nack > 0
        assert set(trace.deliveries[M]) == {0, 1, 2, 3}
        assert not trace.duplicate_deliveries
        assert trace.quiescent

    @pytest.mark.parametrize("n", [4, 8, 32])
    def test_parents_form_spanning_tree(self, n):
        trace = run(n, workload=[AppBroadcast(0.0, 0)], protocol="natree-b")
        procs = trace.processes
        parents = {p: procs[p].trees[0].parent for p in range(n)}
        assert parents[0] is None
        assert all(parents[p] is not None for p in range(1, n))
        for p in range(1, n):
            seen = {p}
            q = parents[p]
            while q is not None:
                assert q not in seen
                seen.add(q)
                q = parents[q]
        # children learnt through ACKs mirror the parent pointers
        for p in range(n):
            kids = set(procs[p].trees[0].children)
            assert kids == {c for c in range(n) if parents[c] == p}
            assert parents[p] not in kids

    def test_steady_state_uses_tree_edges(self):
        n = 8
        one = message_counts(run(n, workload=[AppBroadcast(0.0, 0)], protocol="natree-b", record=False))
        two = message_counts(run(n, workload=[AppBroadcast(0.0, 0)] * 2, protocol="natree-b", record=False))
        assert (two[0] - one[0], two[1] - one[1], two[2] - one[2]) == (n - 1, n - 1, 0)

    def test_crash_during_broadcast_reflood(self):
        trace = run(8, CrashSchedule.of({3: 0.5}), [AppBroadcast(0.0, 0)], "natree-b")
        root = trace.processes[0]
        assert root.trees[0].epoch == 2
        assert root.trees[0].built
        assert trace.quiescent
        assert set(trace.deliveries[M]) >= set(trace.correct_at_end())


class TestNatreeMachine:
    def test_first_copy_joins_and_forwards(self):
        p = NatreeProcess(2, 4)
        actions = p.on_tree(0, Message(TREE, M, b"", root=0, epoch=1, flood=True))
        assert p.trees[0].parent == 0
        assert sends(actions) == [(1, TREE), (3, TREE)]
        dup = p.on_tree(1, Message(TREE, M, b"", root=0, epoch=1, flood=True))
        assert sends(dup) == [(1, NACK)]

    def test_stale_epoch_nacked(self):
        p = NatreeProcess(2, 4)
        p.on_tree(0, Message(TREE, M, b"", root=0, epoch=2, flood=True))
        late = p.on_tree(1, Message(TREE, M, b"", root=0, epoch=1, flood=True))
        assert sends(late) == [(1, NACK)]


def test_natree_exceeds_atree_under_crashes():
    schedule = CrashSchedule.of({5: 1.0, 12: 2.5})
    work = [AppBroadcast(0.0, 0)] * 3
    natree = sum(message_counts(run(16, schedule, work, "natree-b", record=False)))
    atree = sum(message_counts(run(16, schedule, work, "atree-b", record=False)))
    assert natree > atree
