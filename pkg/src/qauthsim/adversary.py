"""Adversary models: in-flight taps and compromised-relay sources.

Three in-flight attacks act on photons in transit (intercept-resend,
subset guessing, photon-number splitting) and two relay compromises
replace the key-slot source itself (product states carrying a bit the
relay knows, or triples with a retained third qubit).  Every attack is
driven by the same RandomSource discipline as the honest parties, so a
whole attacked session replays byte-identically from its seed.

Location knowledge models what the adversary learns about which slots
are detection slots: NEVER, only after the session (identical in-session
behavior to NEVER by construction), or in real time from the control
traffic, in which case taps skip detection slots entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

from .channel import (
    ClassicalMessage,
    Path,
    PhotonCountModel,
    PhotonSlot,
    QuantumStream,
    apply_loss,
    apply_tap,
    build_streams,
)
from .qsim import (
    MeasBasis,
    QubitRef,
    RandomSource,
    prepare_ghz,
    prepare_polarized,
)

if TYPE_CHECKING:  # pragma: no cover
    from .protocol import SessionOutcome, SessionPlan


class AttackKind(Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"
    SUBSET_GUESS = "subset_guess"
    PNS = "pns"
    SERVER_PRODUCT = "server_product"
    SERVER_GHZ = "server_ghz"


class TapPath(Enum):
    TO_ALICE = "to_alice"
    TO_BOB = "to_bob"
    BOTH = "both"

    def channel_paths(self) -> tuple[Path, ...]:
        if self is TapPath.TO_ALICE:
            return (Path.TO_ALICE,)
        if self is TapPath.TO_BOB:
            return (Path.TO_BOB,)
        return (Path.TO_ALICE, Path.TO_BOB)


class BasisChoice(Enum):
    RANDOM_PER_SLOT = "random_per_slot"
    FIXED = "fixed"


class LocationKnowledge(Enum):
    NEVER = "never"
    AFTER_MEASUREMENT = "after_measurement"
    REALTIME = "realtime"


_TAP_KINDS = (AttackKind.INTERCEPT_RESEND, AttackKind.SUBSET_GUESS, AttackKind.PNS)


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind
    path: TapPath = TapPath.TO_BOB
    basis_choice: BasisChoice = BasisChoice.RANDOM_PER_SLOT
    fixed_basis: MeasBasis = MeasBasis.RECTILINEAR
    guess_count: int | None = None
    location_knowledge: LocationKnowledge = LocationKnowledge.NEVER

    def __post_init__(self) -> None:
        if self.kind is AttackKind.SUBSET_GUESS:
            if self.guess_count is None or self.guess_count < 1:
                raise ValueError("subset guessing needs guess_count >= 1")
            if self.location_knowledge is LocationKnowledge.REALTIME:
                raise ValueError("guessing under realtime knowledge is vacuous")
        elif self.guess_count is not None:
            raise ValueError("guess_count only applies to subset guessing")
        if (self.kind not in _TAP_KINDS
                and self.location_knowledge is not LocationKnowledge.NEVER):
            raise ValueError("location knowledge only applies to in-flight taps")


@dataclass
class EveState:
    """Everything the adversary accumulates across one session."""

    attack: AttackConfig | None
    classical_copies: list[ClassicalMessage] = field(default_factory=list)
    measured: dict[tuple[Path, int], tuple[int, MeasBasis]] = field(default_factory=dict)
    split_positions: set[tuple[Path, int]] = field(default_factory=set)
    guessed_positions: tuple[int, ...] | None = None
    realtime_tamper_positions: frozenset[int] | None = None
    post_session_positions: frozenset[int] | None = None
    server_record: dict[int, int] = field(default_factory=dict)
    retained: list[tuple[int, QubitRef]] = field(default_factory=list)

    @property
    def kind(self) -> AttackKind:
        return self.attack.kind if self.attack is not None else AttackKind.NONE


def make_eve(attack: AttackConfig | None) -> EveState:
    return EveState(attack)


def _emit_server_product(plan: "SessionPlan", model: PhotonCountModel,
                         rand: RandomSource, eve: EveState
                         ) -> tuple[QuantumStream, QuantumStream]:
    """Compromised relay: key slots carry identical polarized photons whose
    value the relay records; detection slots stay honest (the relay wrote
    the slot layout, so its checks always pass)."""
    basis = plan.config.key_basis
    to_alice: list[PhotonSlot] = []
    to_bob: list[PhotonSlot] = []
    for position in range(plan.total_slots):
        if plan.is_tamper(position):
            tb, tv = plan.tamper_preparation(position)
            ref_a = QubitRef(prepare_polarized(tv, tb), 0)
            ref_b = QubitRef(prepare_polarized(tv, tb), 0)
        else:
            x = rand.bit()
            eve.server_record[position] = x
            ref_a = QubitRef(prepare_polarized(x, basis), 0)
            ref_b = QubitRef(prepare_polarized(x, basis), 0)
        to_alice.append(PhotonSlot(position, ref_a, model.sample(rand)))
        to_bob.append(PhotonSlot(position, ref_b, model.sample(rand)))
    return (QuantumStream(Path.TO_ALICE, to_alice),
            QuantumStream(Path.TO_BOB, to_bob))


def _emit_server_ghz(plan: "SessionPlan", model: PhotonCountModel,
                     rand: RandomSource, eve: EveState
                     ) -> tuple[QuantumStream, QuantumStream]:
    """Compromised relay: key slots come from three-way entangled triples;
    the relay keeps the third qubit and measures it after the session."""
    to_alice: list[PhotonSlot] = []
    to_bob: list[PhotonSlot] = []
    for position in range(plan.total_slots):
        if plan.is_tamper(position):
            tb, tv = plan.tamper_preparation(position)
            ref_a = QubitRef(prepare_polarized(tv, tb), 0)
            ref_b = QubitRef(prepare_polarized(tv, tb), 0)
        else:
            reg = prepare_ghz()
            ref_a = QubitRef(reg, 0)
            ref_b = QubitRef(reg, 1)
            eve.retained.append((position, QubitRef(reg, 2)))
        to_alice.append(PhotonSlot(position, ref_a, model.sample(rand)))
        to_bob.append(PhotonSlot(position, ref_b, model.sample(rand)))
    return (QuantumStream(Path.TO_ALICE, to_alice),
            QuantumStream(Path.TO_BOB, to_bob))


def _tap_skip(plan: "SessionPlan", eve: EveState) -> frozenset[int]:
    if (eve.attack is not None
            and eve.attack.location_knowledge is LocationKnowledge.REALTIME):
        # decrypted control traffic names the detection slots; skip them
        positions = frozenset(plan.tamper.positions)
        eve.realtime_tamper_positions = positions
        return positions
    return frozenset()


def _intercept_tap(eve: EveState, plan: "SessionPlan", path: Path,
                   rand: RandomSource):
    attack = eve.attack
    realtime = attack.location_knowledge is LocationKnowledge.REALTIME

    def tap(slot: PhotonSlot) -> None:
        if realtime:
            basis = plan.config.key_basis
        elif attack.basis_choice is BasisChoice.RANDOM_PER_SLOT:
            basis = rand.basis()
        else:
            basis = attack.fixed_basis
        bit = slot.measure(basis, rand)
        eve.measured[(path, slot.position)] = (bit, basis)

    return tap


def _pns_tap(eve: EveState, plan: "SessionPlan", path: Path, rand: RandomSource):
    """Multi-photon slots lose one photon to the adversary with no
    disturbance; single-photon slots fall back to a key-basis
    intercept-resend."""
    basis = plan.config.key_basis

    def tap(slot: PhotonSlot) -> None:
        if slot.photon_count >= 2:
            slot.photon_count -= 1
            eve.split_positions.add((path, slot.position))
        else:
            bit = slot.measure(basis, rand)
            eve.measured[(path, slot.position)] = (bit, basis)

    return tap


def stage_attack(plan: "SessionPlan", photon: PhotonCountModel, p_loss: float,
                 rand: RandomSource, eve: EveState
                 ) -> tuple[QuantumStream, QuantumStream]:
    """Emit both quantum streams, apply channel loss, then run any in-flight
    taps over the surviving slots.  Draw order is fixed: emission, loss on
    the initiator path, loss on the responder path, taps in path order."""
    kind = eve.kind
    if kind is AttackKind.SERVER_PRODUCT:
        stream_a, stream_b = _emit_server_product(plan, photon, rand, eve)
    elif kind is AttackKind.SERVER_GHZ:
        stream_a, stream_b = _emit_server_ghz(plan, photon, rand, eve)
    else:
        stream_a, stream_b = build_streams(plan, photon, rand)

    apply_loss(stream_a, p_loss, rand)
    apply_loss(stream_b, p_loss, rand)

    if kind not in _TAP_KINDS:
        return stream_a, stream_b

    attack = eve.attack
    streams = {Path.TO_ALICE: stream_a, Path.TO_BOB: stream_b}
    skip = _tap_skip(plan, eve)

    if kind is AttackKind.SUBSET_GUESS:
        guessed = rand.sample_positions(plan.total_slots, attack.guess_count)
        eve.guessed_positions = guessed
        chosen = set(guessed)
        not_guessed = [p for p in range(plan.total_slots) if p not in chosen]
        for path in attack.path.channel_paths():
            basis = plan.config.key_basis

            def tap(slot: PhotonSlot, _path: Path = path,
                    _basis: MeasBasis = basis) -> None:
                bit = slot.measure(_basis, rand)
                eve.measured[(_path, slot.position)] = (bit, _basis)

            apply_tap(streams[path], tap, skip_positions=not_guessed)
        return stream_a, stream_b

    tap_factory = _intercept_tap if kind is AttackKind.INTERCEPT_RESEND else _pns_tap
    for path in attack.path.channel_paths():
        apply_tap(streams[path], tap_factory(eve, plan, path, rand),
                  skip_positions=skip)
    return stream_a, stream_b


def finish_session(eve: EveState, plan: "SessionPlan", rand: RandomSource) -> None:
    """Post-session adversary actions: measure any retained third qubits and
    record late position disclosure.  Never touches party state."""
    for position, ref in eve.retained:
        eve.server_record[position] = ref.measure(MeasBasis.RECTILINEAR, rand)
    eve.retained = []
    if (eve.attack is not None
            and eve.attack.location_knowledge is LocationKnowledge.AFTER_MEASUREMENT):
        eve.post_session_positions = frozenset(plan.tamper.positions)


@dataclass(frozen=True)
class KnowledgeReport:
    """What the adversary provably knows about the key after one session."""

    certain_positions: tuple[int, ...]
    key_count: int
    fraction: float
    server_copy_match: float | None

    @property
    def certain_count(self) -> int:
        return len(self.certain_positions)


def eve_knowledge_report(eve: EveState, plan: "SessionPlan",
                         outcome: "SessionOutcome") -> KnowledgeReport:
    """Certainty is claimed only where the simulation guarantees it: a direct
    measurement in the very basis the parties use (direct-readout mode only),
    or a split photon at a key slot measured once bases are public.  Relay
    compromises are scored separately as the fraction of key slots where the
    relay's record equals the responder's bit."""
    from .protocol import ProtocolMode

    cfg = plan.config
    key_set = set(plan.key_positions)
    certain: set[int] = set()
    if cfg.mode is ProtocolMode.BASE:
        for (_path, pos), (_bit, basis) in eve.measured.items():
            if pos in key_set and basis is cfg.key_basis:
                certain.add(pos)
        for _path, pos in eve.split_positions:
            if pos in key_set:
                certain.add(pos)

    copy_match: float | None = None
    if eve.server_record and outcome.bob_key_bits is not None:
        bob_at = dict(zip(plan.key_positions, outcome.bob_key_bits))
        hits = sum(1 for pos, bit in eve.server_record.items()
                   if bob_at.get(pos) == bit)
        copy_match = hits / len(eve.server_record)

    return KnowledgeReport(tuple(sorted(certain)), len(key_set),
                           len(certain) / len(key_set), copy_match)
