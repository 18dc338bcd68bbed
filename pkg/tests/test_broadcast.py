import pytest

from vcubecast import CrashSchedule, MessageId, ProtocolError, run
from vcubecast.broadcast import AckSet, AtreeProcess
from vcubecast.messages import ACK, TREE, Complete, Deliver, Send
from vcubecast.sim import AppBroadcast, RECEIVE

M = MessageId(0, 1)


def sends(actions):
    return [(a.to, a.kind) for a in actions if isinstance(a, Send)]


def delivered(actions):
    return [a.mid for a in actions if isinstance(a, Deliver)]


def proc(me, n=8, faulty=(), reliable=False):
    p = AtreeProcess(me, n, reliable=reliable)
    for j in faulty:
        p.view.remove(j)
    return p


class TestAckSet:
    def test_lookup_both_ways(self):
        s = AckSet()
        assert s.add(0, 5, M)
        assert not s.add(0, 5, M)
        s.add(1, 5, M)
        s.add(0, 6, M)
        assert s.has_from(0, M)
        assert s.sources_of(5, M) == [0, 1]
        assert s.discard(0, 5, M)
        assert not s.discard(0, 5, M)
        assert s.sources_of(5, M) == [1]
        assert len(s) == 2

    def test_none_marks_origin(self):
        s = AckSet()
        s.add(None, 1, M)
        assert s.has_from(None, M)
        assert (None, 1, M) in s
        s.discard(None, 1, M)
        assert not s.has_from(None, M)


class TestBroadcast:
    def test_first_broadcast(self):
        p = proc(0)
        actions = p.broadcast(b"x")
        assert delivered(actions) == [M]
        assert sends(actions) == [(1, TREE), (2, TREE), (4, TREE)]
        assert set(p.ack_set) == {(None, 1, M), (None, 2, M), (None, 4, M)}

    def test_alone_completes_at_once(self):
        p = proc(0, n=2, faulty=[1])
        actions = p.broadcast()
        assert delivered(actions) == [M]
        assert Complete(M) in actions
        assert sends(actions) == []

    def test_second_broadcast_waits(self):
        p = proc(0, n=2)
        p.broadcast(b"a")
        assert p.broadcast(b"b") == []
        actions = p.on_ack(1, M)
        assert Complete(M) in actions
        assert delivered(actions) == [MessageId(0, 2)]
        assert sends(actions) == [(1, TREE)]

    def test_queued_broadcast_starts_when_last_ack_is_handled(self):
        trace = run(4, workload=[AppBroadcast(0.0, 0), AppBroadcast(0.0, 0)])
        m1, m2 = trace.message_ids()
        last_ack = max(r.tick for r in trace.records if r.process == 0 and r.action == RECEIVE and r.ts == 1)
        assert trace.completions[m1] == last_ack
        assert trace.started[m2] == last_ack


class TestReceive:
    def test_leaf_delivers_and_acks(self):
        actions = proc(1).on_tree(0, M)
        assert delivered(actions) == [M]
        assert sends(actions) == [(0, ACK)]

    def test_inner_node_forwards(self):
        p = proc(4)
        actions = p.on_tree(0, M)
        assert delivered(actions) == [M]
        assert sends(actions) == [(5, TREE), (6, TREE)]

    def test_duplicate_is_acked_not_delivered(self):
        p = proc(3)
        p.on_tree(2, M)
        actions = p.on_tree(2, M)
        assert delivered(actions) == []
        assert sends(actions) == [(2, ACK)]

    def test_crashed_sender_or_source_ignored(self):
        assert proc(3, faulty=[2]).on_tree(2, M) == []
        assert proc(3, faulty=[0]).on_tree(2, M) == []

    def test_gap_is_an_error(self):
        p = proc(3)
        p.on_tree(2, M)
        with pytest.raises(ProtocolError):
            p.on_tree(2, MessageId(0, 3))


class TestAcks:
    def test_waits_for_whole_subtree(self):
        p = proc(4)
        p.on_tree(0, M)
        assert sends(p.on_ack(5, M)) == []
        assert sends(p.on_ack(6, M)) == [(0, ACK)]

    def test_root_completion(self):
        p = proc(0, n=2)
        p.broadcast()
        assert p.on_ack(1, M) == [Complete(M)]

    def test_unknown_ack_ignored(self):
        assert proc(4).on_ack(5, M) == []


class TestCrash:
    def test_resend_to_replacement(self):
        p = proc(0)
        p.broadcast()
        actions = p.on_crash(4)
        assert sends(actions) == [(5, TREE)]
        assert (None, 5, M) in p.ack_set
        assert (None, 4, M) not in p.ack_set

    def test_source_crash_drops_entries(self):
        p = proc(2)
        p.on_tree(0, M)
        assert (0, 3, M) in p.ack_set
        assert p.on_crash(0) == []
        assert len(p.ack_set) == 0

    def test_emptied_cluster_acks_upstream(self):
        p = proc(6)
        p.on_tree(4, M)
        assert (4, 7, M) in p.ack_set
        assert sends(p.on_crash(7)) == [(4, ACK)]

    def test_repeat_notification_ignored(self):
        p = proc(0)
        p.broadcast()
        p.on_crash(4)
        assert p.on_crash(4) == []


class TestReliable:
    def test_relay_uses_own_tree(self):
        p = proc(2, reliable=True, faulty=[5])
        m = MessageId(5, 1)
        actions = p.on_tree(7, m)
        assert p.last[5] == m
        assert sends(actions) == [(3, TREE), (0, TREE), (6, TREE), (7, ACK)]
        assert set(p.ack_set) == {(None, 3, m), (None, 0, m), (None, 6, m)}

    def test_relay_ignores_own_gate(self):
        p = proc(2, reliable=True)
        p.broadcast(b"own")
        m = MessageId(5, 1)
        p.on_tree(7, m)
        p.view.remove(5)
        assert sends(p.relay(m)) == [(3, TREE), (0, TREE), (6, TREE)]
        assert p.busy

    def test_fresh_message_from_dead_source_is_rebroadcast(self):
        p = proc(4, reliable=True, faulty=[0])
        actions = p.on_tree(2, M)
        assert delivered(actions) == [M]
        assert [to for to, kind in sends(actions) if kind == TREE] == [5, 6, 1]
        assert (2, ACK) in sends(actions)

    def test_duplicate_from_dead_source_not_rebroadcast(self):
        p = proc(4, reliable=True)
        p.on_tree(0, M)
        p.view.remove(0)
        actions = p.on_tree(5, M)
        assert delivered(actions) == []
        assert sends(actions) == [(5, ACK)]

    def test_source_crash_triggers_rebroadcast(self):
        p = proc(3, reliable=True)
        p.on_tree(2, M)
        actions = p.on_crash(0)
        assert [to for to, kind in sends(actions) if kind == TREE] == [2, 1, 7]

    def test_nothing_to_rebroadcast(self):
        assert proc(3, reliable=True).on_crash(0) == []


def test_all_or_nothing_after_source_crash():
    # the source dies right after its first send: only p1 holds the message
    trace = run(8, CrashSchedule.of({0: 0.1}), [AppBroadcast(0.0, 0)], "atree-r")
    survivors = trace.correct_at_end()
    assert all(trace.delivered_by(p) == {M} for p in survivors)
    assert trace.quiescent
