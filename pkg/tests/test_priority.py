from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from mmsim.cheap import pack_unanimity
from mmsim.priority import (EVID_LEADER_SIGNED, EVID_NONE, EVID_UNANIMITY,
                            TAG_B, TAG_M, TAG_T, EvidencePriority,
                            LabelPriority, best_input, classify,
                            eligible_values, pack_evidence)
from mmsim.signing import SignatureOracle

PROCS = ["p1", "p2", "p3"]
LEADER = "p1"


def oracle():
    return SignatureOracle(seed=7)


def unanimity_for(orc, value, signers=PROCS):
    lv = orc.sign(LEADER, value)
    copies = [orc.sign(p, lv.pack()) for p in signers]
    return pack_evidence(EVID_UNANIMITY, pack_unanimity(copies))


def test_unanimity_evidence_classifies_top():
    orc = oracle()
    assert classify(orc, PROCS, LEADER, b"v", unanimity_for(orc, b"v")) == TAG_T


def test_leader_signature_classifies_middle():
    orc = oracle()
    ev = pack_evidence(EVID_LEADER_SIGNED, orc.sign(LEADER, b"v").pack())
    assert classify(orc, PROCS, LEADER, b"v", ev) == TAG_M


def test_missing_or_garbage_evidence_classifies_bottom():
    orc = oracle()
    assert classify(orc, PROCS, LEADER, b"v", pack_evidence(EVID_NONE)) == TAG_B
    assert classify(orc, PROCS, LEADER, b"v", b"") == TAG_B
    assert classify(orc, PROCS, LEADER, b"v", b"\x63junk") == TAG_B


def test_wire_tags_are_recomputed_not_trusted():
    orc = oracle()
    # claims the top kind but the body does not bear it out
    hollow = pack_evidence(EVID_UNANIMITY, b"\x00")
    assert classify(orc, PROCS, LEADER, b"v", hollow) == TAG_B
    # a proof for some other value does not transfer
    ev = unanimity_for(orc, b"other")
    assert classify(orc, PROCS, LEADER, b"v", ev) == TAG_B


def test_unanimity_requires_every_distinct_signer():
    orc = oracle()
    short = unanimity_for(orc, b"v", signers=["p1", "p2"])
    assert classify(orc, PROCS, LEADER, b"v", short) == TAG_B
    padded = unanimity_for(orc, b"v", signers=["p1", "p2", "p2"])
    assert classify(orc, PROCS, LEADER, b"v", padded) == TAG_B


def test_unanimity_requires_the_leader_inside():
    orc = oracle()
    inner = orc.sign("p2", b"v")  # not the leader
    copies = [orc.sign(p, inner.pack()) for p in PROCS]
    ev = pack_evidence(EVID_UNANIMITY, pack_unanimity(copies))
    assert classify(orc, PROCS, LEADER, b"v", ev) == TAG_B


def test_evidence_scheme_orders_tags_then_lexicographic():
    orc = oracle()
    scheme = EvidencePriority(orc, PROCS, LEADER)
    t = ("p3", b"\xff", unanimity_for(orc, b"\xff"))
    m = ("p1", b"\x00",
         pack_evidence(EVID_LEADER_SIGNED, orc.sign(LEADER, b"\x00").pack()))
    b = ("p2", b"\x00", b"")
    assert best_input(scheme, [b, m, t]) == t
    assert best_input(scheme, [b, m]) == m
    # same tag, different value: lower value bytes first
    b2 = ("p1", b"\x01", b"")
    assert best_input(scheme, [b2, b]) == b
    # same tag and value: lower origin id first
    b3 = ("p1", b"\x00", b"")
    assert best_input(scheme, [b, b3]) == b3


def test_label_scheme_higher_rank_wins():
    scheme = LabelPriority({b"a": 5, b"b": 1})
    assert best_input(scheme, [("p1", b"b", b""), ("p2", b"a", b"")]) == \
        ("p2", b"a", b"")
    # unranked values fall to rank 0 and lose to everything ranked
    assert best_input(scheme, [("p1", b"z", b""), ("p2", b"b", b"")]) == \
        ("p2", b"b", b"")


def test_eligible_set_is_the_top_f_plus_one():
    scheme = LabelPriority({b"a": 3, b"b": 2, b"c": 1})
    inputs = [("p1", b"c", b""), ("p2", b"b", b""), ("p3", b"a", b"")]
    assert eligible_values(scheme, inputs, f=0) == {b"a"}
    assert eligible_values(scheme, inputs, f=1) == {b"a", b"b"}
    assert eligible_values(scheme, inputs, f=5) == {b"a", b"b", b"c"}


@given(st.permutations(list(range(6))))
def test_best_input_is_order_independent(order):
    scheme = LabelPriority({bytes([i]): i % 3 for i in range(6)})
    base = [(f"p{i+1}", bytes([i]), b"") for i in range(6)]
    shuffled = [base[i] for i in order]
    assert best_input(scheme, shuffled) == best_input(scheme, base)


@given(st.integers(0, 4),
       st.lists(st.tuples(st.sampled_from(["p1", "p2", "p3", "p4", "p5"]),
                          st.binary(min_size=1, max_size=2)),
                min_size=1, max_size=5, unique_by=lambda e: e[0]))
def test_top_rank_value_is_always_eligible(f, pairs):
    scheme = LabelPriority({v: v[0] for _, v in pairs})
    inputs = [(p, v, b"") for p, v in pairs]
    best = best_input(scheme, inputs)
    assert best[1] in eligible_values(scheme, inputs, f)
