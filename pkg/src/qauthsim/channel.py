"""Quantum paths and the classical side channel.

A quantum path is a sequence of photon slots, one per protocol position.
A slot deliberately carries no preparation metadata: an observer holding it
sees the position, the photon count, and the qubit itself — whether the
slot is a key slot or a detection slot, and which basis it was prepared in,
lives only in the session plan held by the legitimate parties.

Key slots on the two paths share one register (the two halves of an
entangled pair); detection slots are independent single-qubit registers
prepared identically on both paths.

The classical channel is readable by everyone.  Relay-to-party control
traffic is sealed under pre-shared keys by a small keystream cipher that
stands in for a real AEAD (deterministic, dependency-free, and explicitly
not security-reviewed); the token message rides in clear because the two
parties share no key — that is the problem the protocol exists to solve.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, TYPE_CHECKING

from .qsim import (
    MeasBasis,
    QubitRef,
    RandomSource,
    StateRegister,
    prepare_bell,
    prepare_polarized,
    BellLabel,
)

if TYPE_CHECKING:  # pragma: no cover
    from .protocol import SessionPlan


class ChannelError(Exception):
    pass


class TamperedMessageError(ChannelError):
    """Authentication tag mismatch on a sealed classical message."""


class Path(Enum):
    TO_ALICE = "to_alice"
    TO_BOB = "to_bob"


@dataclass(frozen=True)
class PhotonCountModel:
    """Two-valued photon-number model: a slot carries 1 photon with
    probability p1, else 2."""

    p1: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.p1 <= 1.0:
            raise ValueError("p1 must be in (0, 1]")

    def sample(self, rand: RandomSource) -> int:
        if self.p1 >= 1.0:
            return 1
        return 1 if rand.uniform() < self.p1 else 2


class PhotonSlot:
    """One time slot on a quantum path."""

    __slots__ = ("position", "ref", "photon_count", "lost")

    def __init__(self, position: int, ref: QubitRef, photon_count: int = 1) -> None:
        self.position = position
        self.ref = ref
        self.photon_count = photon_count
        self.lost = False

    @property
    def register(self) -> StateRegister:
        return self.ref.register

    @property
    def qubit_index(self) -> int:
        return self.ref.index

    def measure(self, basis: MeasBasis, rand: RandomSource) -> int:
        if self.lost:
            raise ChannelError(f"slot {self.position} was lost in transit")
        return self.ref.measure(basis, rand)

    def __repr__(self) -> str:
        flags = " lost" if self.lost else ""
        return f"PhotonSlot(pos={self.position}, photons={self.photon_count}{flags})"


@dataclass
class QuantumStream:
    path: Path
    slots: list[PhotonSlot]

    def lost_positions(self) -> tuple[int, ...]:
        return tuple(s.position for s in self.slots if s.lost)


def build_streams(plan: "SessionPlan", model: PhotonCountModel,
                  rand: RandomSource) -> tuple[QuantumStream, QuantumStream]:
    """Honest emission: entangled pairs on key slots, identical twin
    polarized photons on detection slots."""
    to_alice: list[PhotonSlot] = []
    to_bob: list[PhotonSlot] = []
    for position in range(plan.total_slots):
        if plan.is_tamper(position):
            basis, value = plan.tamper_preparation(position)
            reg_a = prepare_polarized(value, basis)
            reg_b = prepare_polarized(value, basis)
            ref_a = QubitRef(reg_a, 0)
            ref_b = QubitRef(reg_b, 0)
        else:
            reg = prepare_bell(BellLabel.PHI_PLUS)
            ref_a = QubitRef(reg, 0)
            ref_b = QubitRef(reg, 1)
        to_alice.append(PhotonSlot(position, ref_a, model.sample(rand)))
        to_bob.append(PhotonSlot(position, ref_b, model.sample(rand)))
    return (QuantumStream(Path.TO_ALICE, to_alice),
            QuantumStream(Path.TO_BOB, to_bob))


def apply_loss(stream: QuantumStream, p_loss: float, rand: RandomSource) -> int:
    """Mark each slot lost independently with probability p_loss; returns count."""
    if not 0.0 <= p_loss < 1.0:
        raise ValueError("p_loss must be in [0, 1)")
    if p_loss == 0.0:
        return 0
    lost = 0
    for slot in stream.slots:
        if rand.uniform() < p_loss:
            slot.lost = True
            lost += 1
    return lost


def apply_tap(stream: QuantumStream, tap: Callable[[PhotonSlot], None],
              skip_positions: Iterable[int] = ()) -> int:
    """Run an adversary tap over every surviving slot, in position order."""
    skip = frozenset(skip_positions)
    touched = 0
    for slot in stream.slots:
        if slot.lost or slot.position in skip:
            continue
        tap(slot)
        touched += 1
    return touched


# --- classical side ------------------------------------------------------------

@dataclass(frozen=True)
class ClassicalMessage:
    sender: str
    receiver: str
    body: bytes


def classical_send(message: ClassicalMessage,
                   copy_sink: list[ClassicalMessage] | None = None) -> ClassicalMessage:
    """Deliver a classical message; anyone listening gets a verbatim copy."""
    if copy_sink is not None:
        copy_sink.append(message)
    return message


class KeystreamCipher:
    """Reference sealed-message cipher: SHA-256 keystream XOR plus a 16-byte tag.

    Pluggable stand-in for a real authenticated cipher.  Not security-reviewed;
    good enough to make "Eve reads but cannot usefully modify" executable.
    """

    TAG_LEN = 16

    def __init__(self, key: bytes) -> None:
        if len(key) < 16:
            raise ValueError("key must be at least 16 bytes")
        self._key = bytes(key)

    def _stream(self, nonce: int, length: int) -> bytes:
        out = bytearray()
        counter = 0
        while len(out) < length:
            block = hashlib.sha256(
                self._key + b"|ks|%d|%d" % (nonce, counter)).digest()
            out.extend(block)
            counter += 1
        return bytes(out[:length])

    def seal(self, nonce: int, plaintext: bytes) -> bytes:
        body = bytes(p ^ s for p, s in zip(plaintext, self._stream(nonce, len(plaintext))))
        tag = hashlib.sha256(self._key + b"|tag|%d|" % nonce + body).digest()[:self.TAG_LEN]
        return body + tag

    def open(self, nonce: int, blob: bytes) -> bytes:
        if len(blob) < self.TAG_LEN:
            raise TamperedMessageError("sealed message too short")
        body, tag = blob[:-self.TAG_LEN], blob[-self.TAG_LEN:]
        want = hashlib.sha256(self._key + b"|tag|%d|" % nonce + body).digest()[:self.TAG_LEN]
        if tag != want:
            raise TamperedMessageError("authentication tag mismatch")
        return bytes(c ^ s for c, s in zip(body, self._stream(nonce, len(body))))
