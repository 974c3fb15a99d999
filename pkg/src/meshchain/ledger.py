"""Hash-chained ledger over a versioned key/value world state.

Everything here is an immutable value: committing a block returns a new
:class:`Ledger` and leaves the old one untouched.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

from .codec import Decoder, Encoder

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


class ChainIntegrityError(Exception):
    """A block does not link to the ledger tip."""


class ChaincodeError(Exception):
    """Chaincode simulation failed; the endorser rejects the proposal."""


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# ---------------------------------------------------------------------------
# transaction content


@dataclass(frozen=True)
class TxProposal:
    tx_id: str
    client_id: str
    chaincode_id: str
    function: str
    args: tuple[bytes, ...] = ()
    submit_time: float = 0.0

    def __post_init__(self):
        if self.args is None:
            raise ValueError("args must not be None")
        object.__setattr__(self, "args", tuple(bytes(a) for a in self.args))

    def encode(self, enc: Encoder) -> None:
        enc.str(self.tx_id).str(self.client_id).str(self.chaincode_id).str(self.function)
        enc.count(len(self.args))
        for a in self.args:
            enc.bytes(a)
        enc.float(self.submit_time)

    @classmethod
    def decode(cls, dec: Decoder) -> "TxProposal":
        tx_id, client_id, cc, fn = dec.str(), dec.str(), dec.str(), dec.str()
        args = tuple(dec.bytes() for _ in range(dec.count()))
        return cls(tx_id, client_id, cc, fn, args, dec.float())


@dataclass(frozen=True)
class ReadWriteSet:
    """Keys read (with the version observed, 0 meaning absent) and keys written."""

    reads: tuple[tuple[str, int], ...] = ()
    writes: tuple[tuple[str, bytes], ...] = ()

    def __post_init__(self):
        reads = tuple((str(k), int(v)) for k, v in self.reads)
        writes = tuple((str(k), bytes(v)) for k, v in self.writes)
        if len({k for k, _ in reads}) != len(reads):
            raise ValueError("duplicate key in read set")
        if len({k for k, _ in writes}) != len(writes):
            raise ValueError("duplicate key in write set")
        object.__setattr__(self, "reads", reads)
        object.__setattr__(self, "writes", writes)

    @property
    def is_query(self) -> bool:
        return not self.writes

    def encode(self, enc: Encoder) -> None:
        enc.count(len(self.reads))
        for key, version in self.reads:
            enc.str(key).int(version)
        enc.count(len(self.writes))
        for key, value in self.writes:
            enc.str(key).bytes(value)

    @classmethod
    def decode(cls, dec: Decoder) -> "ReadWriteSet":
        reads = tuple((dec.str(), dec.int()) for _ in range(dec.count()))
        writes = tuple((dec.str(), dec.bytes()) for _ in range(dec.count()))
        return cls(reads, writes)

    def to_bytes(self) -> bytes:
        enc = Encoder()
        self.encode(enc)
        return enc.getvalue()

    def digest(self) -> bytes:
        return digest(self.to_bytes())


@dataclass(frozen=True)
class Endorsement:
    endorser_id: str
    response_digest: bytes

    def encode(self, enc: Encoder) -> None:
        enc.str(self.endorser_id).bytes(self.response_digest)

    @classmethod
    def decode(cls, dec: Decoder) -> "Endorsement":
        return cls(dec.str(), dec.bytes())


@dataclass(frozen=True)
class EndorsementPolicy:
    endorser_set: frozenset[str]
    required_k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "endorser_set", frozenset(self.endorser_set))
        if not 1 <= self.required_k <= len(self.endorser_set):
            raise ValueError(
                f"required_k={self.required_k} outside [1, {len(self.endorser_set)}]"
            )


@dataclass(frozen=True)
class Transaction:
    proposal: TxProposal
    rwset: ReadWriteSet
    endorsements: tuple[Endorsement, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "endorsements", tuple(self.endorsements))

    @property
    def tx_id(self) -> str:
        return self.proposal.tx_id

    def endorsements_match(self) -> bool:
        """True when every endorsement signs exactly this transaction's rwset."""
        d = self.rwset.digest()
        return all(e.response_digest == d for e in self.endorsements)

    def encode(self, enc: Encoder) -> None:
        self.proposal.encode(enc)
        self.rwset.encode(enc)
        enc.count(len(self.endorsements))
        for e in self.endorsements:
            e.encode(enc)

    @classmethod
    def decode(cls, dec: Decoder) -> "Transaction":
        proposal = TxProposal.decode(dec)
        rwset = ReadWriteSet.decode(dec)
        ends = tuple(Endorsement.decode(dec) for _ in range(dec.count()))
        return cls(proposal, rwset, ends)


def hash_block(number: int, prev_hash: bytes, txs: Sequence[Transaction]) -> bytes:
    enc = Encoder()
    enc.int(number).bytes(prev_hash)
    enc.count(len(txs))
    for tx in txs:
        tx.encode(enc)
    return digest(enc.getvalue())


@dataclass(frozen=True)
class Block:
    number: int
    prev_hash: bytes
    txs: tuple[Transaction, ...]
    block_hash: bytes
    # commit-time metadata, deliberately outside the hashed content
    validity: tuple[bool, ...] | None = None

    @classmethod
    def build(cls, number: int, prev_hash: bytes, txs: Iterable[Transaction]) -> "Block":
        txs = tuple(txs)
        return cls(number, prev_hash, txs, hash_block(number, prev_hash, txs))

    def with_validity(self, flags: Sequence[bool]) -> "Block":
        if len(flags) != len(self.txs):
            raise ValueError("one validity flag per transaction required")
        return replace(self, validity=tuple(bool(f) for f in flags))

    def encode(self, enc: Encoder) -> None:
        enc.int(self.number).bytes(self.prev_hash)
        enc.count(len(self.txs))
        for tx in self.txs:
            tx.encode(enc)
        enc.bytes(self.block_hash)
        enc.bool(self.validity is not None)
        if self.validity is not None:
            enc.count(len(self.validity))
            for flag in self.validity:
                enc.bool(flag)

    @classmethod
    def decode(cls, dec: Decoder) -> "Block":
        number = dec.int()
        prev_hash = dec.bytes()
        txs = tuple(Transaction.decode(dec) for _ in range(dec.count()))
        block_hash = dec.bytes()
        validity = None
        if dec.bool():
            validity = tuple(dec.bool() for _ in range(dec.count()))
        return cls(number, prev_hash, txs, block_hash, validity)


GENESIS = Block.build(0, ZERO_DIGEST, ()).with_validity(())


# ---------------------------------------------------------------------------
# world state


class WorldState:
    """Immutable map ``key -> (value, version)``; versions start at 1."""

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[str, tuple[bytes, int]] | None = None):
        self._entries = MappingProxyType(dict(entries or {}))

    @property
    def entries(self) -> Mapping[str, tuple[bytes, int]]:
        return self._entries

    def get(self, key: str) -> bytes | None:
        entry = self._entries.get(key)
        return None if entry is None else entry[0]

    def version(self, key: str) -> int:
        entry = self._entries.get(key)
        return 0 if entry is None else entry[1]

    def apply(self, writes: Iterable[tuple[str, bytes]]) -> "WorldState":
        entries = dict(self._entries)
        for key, value in writes:
            old = entries.get(key)
            entries[key] = (value, 1 if old is None else old[1] + 1)
        return WorldState(entries)

    def keys(self):
        return self._entries.keys()

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, WorldState) and dict(self._entries) == dict(other._entries)

    def __repr__(self) -> str:
        return f"WorldState({dict(self._entries)!r})"

    def encode(self, enc: Encoder) -> None:
        enc.count(len(self._entries))
        for key in sorted(self._entries):
            value, version = self._entries[key]
            enc.str(key).bytes(value).int(version)

    @classmethod
    def decode(cls, dec: Decoder) -> "WorldState":
        return cls({dec.str(): (dec.bytes(), dec.int()) for _ in range(dec.count())})


# ---------------------------------------------------------------------------
# chaincode simulation


class StateStub:
    """Read/write recorder handed to chaincode during simulation.

    The underlying state is never modified; reads record the version seen
    (0 for absent keys) the first time a key is read.
    """

    def __init__(self, state: WorldState):
        self._state = state
        self._reads: dict[str, int] = {}
        self._writes: dict[str, bytes] = {}

    def get(self, key: str) -> bytes | None:
        if key in self._writes:
            return self._writes[key]
        if key not in self._reads:
            self._reads[key] = self._state.version(key)
        return self._state.get(key)

    def put(self, key: str, value: bytes) -> None:
        self._writes[key] = bytes(value)

    def rwset(self) -> ReadWriteSet:
        return ReadWriteSet(tuple(self._reads.items()), tuple(self._writes.items()))


Chaincode = Callable[[StateStub, str, Sequence[bytes]], bytes]


class ChaincodeRegistry:
    def __init__(self, chaincodes: Mapping[str, Chaincode] | None = None):
        self._chaincodes: dict[str, Chaincode] = dict(chaincodes or {})

    def register(self, name: str, chaincode: Chaincode) -> None:
        self._chaincodes[name] = chaincode

    def __contains__(self, name: str) -> bool:
        return name in self._chaincodes

    def lookup(self, name: str) -> Chaincode:
        try:
            return self._chaincodes[name]
        except KeyError:
            raise ChaincodeError(f"unknown chaincode {name!r}") from None


_default_registry: ChaincodeRegistry | None = None


def default_registry() -> ChaincodeRegistry:
    global _default_registry
    if _default_registry is None:
        from .compensation import CHAINCODE_ID, compensation_chaincode

        _default_registry = ChaincodeRegistry({CHAINCODE_ID: compensation_chaincode})
    return _default_registry


def execute_chaincode(
    state: WorldState, proposal: TxProposal, registry: ChaincodeRegistry | None = None
) -> tuple[ReadWriteSet, bytes]:
    """Run the proposal's chaincode against ``state``; return (rwset, payload)."""
    chaincode = (registry or default_registry()).lookup(proposal.chaincode_id)
    stub = StateStub(state)
    payload = chaincode(stub, proposal.function, proposal.args)
    return stub.rwset(), payload


def simulate_chaincode(
    state: WorldState, proposal: TxProposal, registry: ChaincodeRegistry | None = None
) -> ReadWriteSet:
    return execute_chaincode(state, proposal, registry)[0]


# ---------------------------------------------------------------------------
# validation and commit


def evaluate_policy(policy: EndorsementPolicy, endorsements: Iterable[Endorsement]) -> bool:
    """True iff at least ``required_k`` distinct members of the endorser set
    endorsed and every endorsement carries the same digest."""
    endorsements = list(endorsements)
    if len({e.response_digest for e in endorsements}) > 1:
        return False
    signers = {e.endorser_id for e in endorsements if e.endorser_id in policy.endorser_set}
    return len(signers) >= policy.required_k


def mvcc_validate(state: WorldState, block: Block, policy: EndorsementPolicy) -> list[bool]:
    """Per-transaction validity flags for ``block`` applied on top of ``state``.

    A read is current when its version equals the version left by the
    committed state plus the earlier *valid* transactions of this block.
    """
    versions: dict[str, int] = {}
    flags = []
    for tx in block.txs:
        ok = evaluate_policy(policy, tx.endorsements) and tx.endorsements_match()
        if ok:
            for key, seen in tx.rwset.reads:
                current = versions[key] if key in versions else state.version(key)
                if current != seen:
                    ok = False
                    break
        if ok:
            for key, _ in tx.rwset.writes:
                current = versions[key] if key in versions else state.version(key)
                versions[key] = current + 1
        flags.append(ok)
    return flags


@dataclass(frozen=True)
class Ledger:
    blocks: tuple[Block, ...] = (GENESIS,)
    state: WorldState = field(default_factory=WorldState)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return len(self.blocks)

    def valid_transactions(self) -> Iterable[Transaction]:
        for block in self.blocks:
            if block.validity is None:
                continue
            for tx, ok in zip(block.txs, block.validity):
                if ok:
                    yield tx

    def to_bytes(self) -> bytes:
        enc = Encoder()
        enc.count(len(self.blocks))
        for block in self.blocks:
            block.encode(enc)
        self.state.encode(enc)
        return enc.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ledger":
        dec = Decoder(data)
        blocks = tuple(Block.decode(dec) for _ in range(dec.count()))
        state = WorldState.decode(dec)
        dec.finish()
        return cls(blocks, state)


def commit_block(ledger: Ledger, block: Block) -> Ledger:
    if block.validity is None:
        raise ValueError("block has no validity flags; run mvcc_validate first")
    tip = ledger.tip
    if block.prev_hash != tip.block_hash or block.number != tip.number + 1:
        raise ChainIntegrityError(
            f"block {block.number} does not extend tip {tip.number} "
            f"({block.prev_hash.hex()[:12]} != {tip.block_hash.hex()[:12]})"
        )
    state = ledger.state
    for tx, ok in zip(block.txs, block.validity):
        if ok:
            state = state.apply(tx.rwset.writes)
    return Ledger(ledger.blocks + (block,), state)


def replay_state(blocks: Iterable[Block]) -> WorldState:
    state = WorldState()
    for block in blocks:
        for tx, ok in zip(block.txs, block.validity or ()):
            if ok:
                state = state.apply(tx.rwset.writes)
    return state


def verify_chain(ledger: Ledger) -> bool:
    """Recompute every block hash, check the links and the derived state."""
    blocks = ledger.blocks
    if not blocks or blocks[0].number != 0 or blocks[0].prev_hash != ZERO_DIGEST:
        return False
    prev = None
    for block in blocks:
        if hash_block(block.number, block.prev_hash, block.txs) != block.block_hash:
            return False
        if prev is not None and (
            block.prev_hash != prev.block_hash or block.number != prev.number + 1
        ):
            return False
        if block.validity is None or len(block.validity) != len(block.txs):
            return False
        prev = block
    return replay_state(blocks) == ledger.state
