"""Session state machine: planning, key algebra, events, end-to-end runs."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from qauthsim.protocol import (
    BeliefRule,
    ProtocolMode,
    SessionConfig,
    SessionStatus,
    TamperSpec,
    authenticate,
    believed_state,
    derive_key_bit,
    make_token,
    plan_session,
    run_session,
    tamper_check,
)
from qauthsim.qsim import BellKind, BellLabel, MeasBasis, RandomSource, bell_compose


def _cfg(k=8, d=8, mode=ProtocolMode.BASE, rule=None, **kw):
    return SessionConfig(k=k, d=d, reveal_count=kw.pop("reveal_count", k),
                         mode=mode, belief_rule=rule, **kw)


class TestConfigValidation:
    def test_bounds(self):
        with pytest.raises(ValueError):
            SessionConfig(0, 1, 1, ProtocolMode.BASE)
        with pytest.raises(ValueError):
            SessionConfig(4, -1, 1, ProtocolMode.BASE)
        with pytest.raises(ValueError):
            SessionConfig(4, 4, 0, ProtocolMode.BASE)
        with pytest.raises(ValueError):
            SessionConfig(4, 4, 5, ProtocolMode.BASE)
        with pytest.raises(ValueError):
            SessionConfig(4, 4, 4, ProtocolMode.BASE, error_threshold=1.0)

    def test_swap_needs_rule(self):
        with pytest.raises(ValueError):
            SessionConfig(4, 4, 4, ProtocolMode.SWAP)
        SessionConfig(4, 4, 4, ProtocolMode.SWAP, BeliefRule.COMPOSED)

    def test_swap_rejects_diagonal_key_basis(self):
        with pytest.raises(ValueError):
            SessionConfig(4, 4, 4, ProtocolMode.SWAP, BeliefRule.COMPOSED,
                          key_basis=MeasBasis.DIAGONAL)

    def test_zero_detection_slots_allowed(self):
        cfg = SessionConfig(4, 0, 4, ProtocolMode.BASE)
        assert cfg.total_slots == 4


class TestPlanning:
    def test_partition(self):
        cfg = _cfg(k=5, d=7)
        plan = plan_session(cfg, RandomSource(1, 0))
        assert len(plan.tamper.positions) == 7
        assert len(plan.key_positions) == 5
        both = set(plan.tamper.positions) | set(plan.key_positions)
        assert both == set(range(12))
        assert list(plan.tamper.positions) == sorted(plan.tamper.positions)

    def test_lookup(self):
        plan = plan_session(_cfg(), RandomSource(2, 0))
        for i, pos in enumerate(plan.tamper.positions):
            assert plan.is_tamper(pos)
            assert plan.tamper_preparation(pos) == (plan.tamper.bases[i],
                                                    plan.tamper.values[i])
        for pos in plan.key_positions:
            assert not plan.is_tamper(pos)

    def test_deterministic(self):
        a = plan_session(_cfg(), RandomSource(3, 4))
        b = plan_session(_cfg(), RandomSource(3, 4))
        assert a == b

    def test_positions_uniform(self):
        # every position should be a tamper slot about d/(k+d) of the time
        cfg = _cfg(k=4, d=4)
        counts = [0] * 8
        n = 4000
        for t in range(n):
            plan = plan_session(cfg, RandomSource(4, t))
            for p in plan.tamper.positions:
                counts[p] += 1
        sigma = math.sqrt(0.5 * 0.5 / n)
        for c in counts:
            assert abs(c / n - 0.5) < 5 * sigma


def test_tamper_spec_roundtrip():
    spec = TamperSpec((1, 4, 6), (MeasBasis.RECTILINEAR, MeasBasis.DIAGONAL,
                                  MeasBasis.DIAGONAL), (0, 1, 1))
    assert TamperSpec.decode(spec.encode()) == spec


def test_believed_state_rules():
    for s in BellLabel:
        for m in BellLabel:
            assert believed_state(s, m, BeliefRule.COMPOSED) == bell_compose(s, m)
            assert believed_state(s, m, BeliefRule.MEASURED) == m


def test_derive_key_bit():
    assert derive_key_bit(BellLabel.PHI_PLUS, 0) == 0
    assert derive_key_bit(BellLabel.PHI_MINUS, 1) == 1
    assert derive_key_bit(BellLabel.PSI_PLUS, 0) == 1
    assert derive_key_bit(BellLabel.PSI_MINUS, 1) == 0
    with pytest.raises(ValueError):
        derive_key_bit(BellLabel.PHI_PLUS, 2)


def test_make_token_and_authenticate():
    key = (1, 0, 1, 1, 0)
    assert make_token(key, 3) == (1, 0, 1)
    assert authenticate((1, 0, 1), key)
    assert not authenticate((1, 0, 0), key)
    with pytest.raises(ValueError):
        make_token(key, 6)
    with pytest.raises(ValueError):
        authenticate((), key)
    with pytest.raises(ValueError):
        authenticate((1, 0, 1), (1, 0))


def test_tamper_check():
    assert tamper_check((), (), 0.0) == (True, 0.0)
    assert tamper_check((1, 1, 0, 0), (1, 1, 0, 0), 0.0) == (True, 0.0)
    passed, rate = tamper_check((1, 0, 0, 0), (1, 1, 0, 0), 0.0)
    assert not passed and rate == 0.25
    # rate equal to the threshold still passes
    assert tamper_check((1, 0, 0, 0), (1, 1, 0, 0), 0.25)[0]
    with pytest.raises(ValueError):
        tamper_check((1,), (1, 0), 0.0)


class TestHonestSessions:
    def test_base_mode(self):
        cfg = _cfg()
        for t in range(50):
            out = run_session(cfg, None, RandomSource(10, t))
            assert out.status is SessionStatus.AUTH_ACCEPT
            assert out.alice_tamper_error_rate == 0.0
            assert out.bob_tamper_error_rate == 0.0
            assert out.key_match_fraction() == 1.0
            assert out.token == out.alice_key_bits[:cfg.reveal_count]

    def test_swap_composed_always_agrees(self):
        cfg = _cfg(mode=ProtocolMode.SWAP, rule=BeliefRule.COMPOSED)
        for t in range(50):
            out = run_session(cfg, None, RandomSource(11, t))
            assert out.status is SessionStatus.AUTH_ACCEPT
            assert out.key_match_fraction() == 1.0
            assert len(out.swap_records) == cfg.k

    def test_swap_measured_mismatch_is_psi_kind_created(self):
        # under the MEASURED rule an honest session garbles exactly the
        # slots whose created pair was psi-kind
        cfg = _cfg(mode=ProtocolMode.SWAP, rule=BeliefRule.MEASURED)
        seen_mismatch = False
        for t in range(80):
            out = run_session(cfg, None, RandomSource(12, t))
            bob_at = dict(zip(out.plan.key_positions, out.bob_key_bits))
            for rec in out.swap_records:
                agree = rec.key_bit == bob_at[rec.position]
                assert agree == (rec.created.kind is BellKind.PHI)
                seen_mismatch |= not agree
        assert seen_mismatch

    def test_swap_measured_accept_rate(self):
        # all reveal bits must agree by luck: rate 2^-reveal
        cfg = _cfg(k=4, d=4, mode=ProtocolMode.SWAP, rule=BeliefRule.MEASURED,
                   reveal_count=4)
        n = 3000
        acc = sum(run_session(cfg, None, RandomSource(13, t)).status
                  is SessionStatus.AUTH_ACCEPT for t in range(n))
        p = 2 ** -4
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(acc / n - p) < 4 * sigma

    def test_zero_detection_slots_vacuous(self):
        cfg = _cfg(k=4, d=0)
        out = run_session(cfg, None, RandomSource(14, 0))
        assert out.status is SessionStatus.AUTH_ACCEPT
        assert out.alice_tamper_error_rate == 0.0


class TestEvents:
    def test_step_sequence_base(self):
        out = run_session(_cfg(), None, RandomSource(20, 0))
        steps = [s for s, _, _ in out.events.entries]
        assert steps[0] == "1"
        assert steps.index("2") < steps.index("3") < steps.index("4")
        assert steps.index("4") < steps.index("5") < steps.index("6")

    def test_swap_responder_waits_for_token(self):
        # the responder must not measure anything until the token is out
        cfg = _cfg(mode=ProtocolMode.SWAP, rule=BeliefRule.COMPOSED)
        out = run_session(cfg, None, RandomSource(21, 0))
        token_at = out.events.first_index(step="5", party="alice")
        bob_at = out.events.first_index(party="bob")
        assert token_at is not None and bob_at is not None
        assert bob_at > token_at
        assert out.events.entries[bob_at][0] == "5d"

    def test_swap_substeps_logged_per_key_slot(self):
        cfg = _cfg(k=3, d=2, mode=ProtocolMode.SWAP, rule=BeliefRule.COMPOSED,
                   reveal_count=3)
        out = run_session(cfg, None, RandomSource(22, 0))
        steps = [s for s, _, _ in out.events.entries]
        assert steps.count("5a") == 3
        assert steps.count("5b") == 3
        assert steps.count("5c") == 3

    def test_digest_stable_and_seed_sensitive(self):
        cfg = _cfg()
        a = run_session(cfg, None, RandomSource(23, 0)).events
        b = run_session(cfg, None, RandomSource(23, 0)).events
        c = run_session(cfg, None, RandomSource(23, 1)).events
        assert a.text() == b.text()
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()


def test_loss_gives_incomplete_stream():
    out = run_session(_cfg(), None, RandomSource(30, 0), p_loss=0.4)
    assert out.status is SessionStatus.INCOMPLETE_STREAM
    assert out.token is None
    assert out.alice_key_bits is None


def test_threshold_monotone():
    # any session passing at threshold t passes at every larger t
    from qauthsim.adversary import AttackConfig, AttackKind, TapPath

    atk = AttackConfig(AttackKind.INTERCEPT_RESEND, path=TapPath.TO_BOB)
    strict_fail = 0
    for t in range(120):
        lo = run_session(_cfg(error_threshold=0.0), atk, RandomSource(31, t))
        hi = run_session(_cfg(error_threshold=0.5), atk, RandomSource(31, t))
        if "bob" in lo.failed_checks:
            strict_fail += 1
        if "bob" not in lo.failed_checks:
            assert "bob" not in hi.failed_checks
        assert lo.bob_tamper_error_rate == hi.bob_tamper_error_rate
    assert strict_fail > 0


def test_swap_alice_abort_leaves_no_key_material():
    from qauthsim.adversary import AttackConfig, AttackKind, TapPath

    cfg = _cfg(k=4, d=16, mode=ProtocolMode.SWAP, rule=BeliefRule.COMPOSED,
               reveal_count=4)
    atk = AttackConfig(AttackKind.INTERCEPT_RESEND, path=TapPath.TO_ALICE)
    aborted = None
    for t in range(60):
        out = run_session(cfg, atk, RandomSource(32, t))
        if out.status is SessionStatus.TAMPER_ABORT:
            aborted = out
            break
    assert aborted is not None
    assert aborted.failed_checks == ("alice",)
    assert aborted.swap_records is None
    assert aborted.alice_key_bits is None
    assert aborted.token is None
    # the responder never measured either
    assert aborted.events.first_index(party="bob") is None


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 6), d=st.integers(0, 6), seed=st.integers(0, 2 ** 32))
def test_honest_sessions_always_accept(k, d, seed):
    cfg = SessionConfig(k=k, d=d, reveal_count=k, mode=ProtocolMode.BASE)
    out = run_session(cfg, None, RandomSource(seed, 0))
    assert out.status is SessionStatus.AUTH_ACCEPT
    assert out.key_match_fraction() == 1.0

    cfg = SessionConfig(k=k, d=d, reveal_count=k, mode=ProtocolMode.SWAP,
                        belief_rule=BeliefRule.COMPOSED)
    out = run_session(cfg, None, RandomSource(seed, 1))
    assert out.status is SessionStatus.AUTH_ACCEPT
    assert out.key_match_fraction() == 1.0
