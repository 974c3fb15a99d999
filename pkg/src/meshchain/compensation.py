"""Zero-sum compensation chaincode for community network resource accounting.

Participants record the economic value of what they contribute to the
network (nodes, links, gateways, maintenance) and what they consume. The
contribution pool is shared among consumers in proportion to their
consumption, so that for every accounting period the balances add up to
exactly zero. Money is kept in integer micro-units throughout.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, Sequence

from .ledger import ChaincodeError, Ledger, StateStub

CHAINCODE_ID = "compensation"
CONTRIBUTION = "contribution"
CONSUMPTION = "consumption"
MICRO = 1_000_000


class SettlementError(ValueError):
    """The balance sheet handed to :func:`settle` is not zero-sum."""


def to_micro(amount) -> int:
    """Convert a decimal amount (str, int or Decimal) to integer micro-units."""
    try:
        d = Decimal(str(amount))
    except InvalidOperation:
        raise ValueError(f"not a decimal amount: {amount!r}") from None
    scaled = d * MICRO
    if scaled != scaled.to_integral_value():
        raise ValueError(f"{amount!r} has more than 6 decimal places")
    return int(scaled)


def format_micro(value: int) -> str:
    sign = "-" if value < 0 else ""
    whole, frac = divmod(abs(value), MICRO)
    return f"{sign}{whole}.{frac:06d}"


@dataclass(frozen=True)
class ResourceRecord:
    participant: str
    kind: str
    quantity: int
    unit_value: int  # micro-units per unit
    period: str

    def __post_init__(self):
        if self.kind not in (CONTRIBUTION, CONSUMPTION):
            raise ValueError(f"unknown record kind {self.kind!r}")
        if self.quantity < 0 or self.unit_value < 0:
            raise ValueError("quantity and unit_value must be non-negative")

    @property
    def value(self) -> int:
        return self.quantity * self.unit_value

    def to_bytes(self) -> bytes:
        return json.dumps(
            {
                "participant": self.participant,
                "kind": self.kind,
                "quantity": self.quantity,
                "unit_value": self.unit_value,
                "period": self.period,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ResourceRecord":
        d = json.loads(raw)
        return cls(d["participant"], d["kind"], d["quantity"], d["unit_value"], d["period"])


def record_args(participant: str, kind: str, quantity: int, unit_value, period: str) -> tuple[bytes, ...]:
    """Build the argument list for a ``record`` invocation."""
    return (
        participant.encode(),
        kind.encode(),
        str(quantity).encode(),
        str(unit_value).encode(),
        period.encode(),
    )


def seq_key(period: str, participant: str) -> str:
    return f"seq/{period}/{participant}"


def rec_key(period: str, participant: str, seq: int) -> str:
    return f"rec/{period}/{participant}/{seq}"


def chaincode_record(stub: StateStub, participant: str, kind: str, quantity: int,
                     unit_value: int, period: str) -> bytes:
    if quantity < 0:
        raise ChaincodeError("negative quantity")
    if unit_value < 0:
        raise ChaincodeError("negative unit value")
    try:
        record = ResourceRecord(participant, kind, quantity, unit_value, period)
    except ValueError as exc:
        raise ChaincodeError(str(exc)) from None
    # reading the sequence number makes concurrent records by one participant
    # conflict under MVCC
    raw = stub.get(seq_key(period, participant))
    seq = 0 if raw is None else int(raw)
    stub.put(rec_key(period, participant, seq), record.to_bytes())
    stub.put(seq_key(period, participant), str(seq + 1).encode())
    return str(seq).encode()


def chaincode_query_balance(stub: StateStub, period: str, participant: str) -> bytes:
    """Net recorded value (contribution minus consumption) for one participant."""
    raw = stub.get(seq_key(period, participant))
    count = 0 if raw is None else int(raw)
    net = 0
    for i in range(count):
        rec = stub.get(rec_key(period, participant, i))
        if rec is None:
            continue
        r = ResourceRecord.from_bytes(rec)
        net += r.value if r.kind == CONTRIBUTION else -r.value
    return str(net).encode()


def compensation_chaincode(stub: StateStub, function: str, args: Sequence[bytes]) -> bytes:
    try:
        text = [a.decode("utf-8") for a in args]
    except UnicodeDecodeError:
        raise ChaincodeError("arguments must be UTF-8") from None
    if function == "record":
        if len(text) != 5:
            raise ChaincodeError("record expects 5 arguments")
        participant, kind, quantity, unit_value, period = text
        try:
            qty = int(quantity)
            unit = to_micro(unit_value)
        except ValueError as exc:
            raise ChaincodeError(str(exc)) from None
        return chaincode_record(stub, participant, kind, qty, unit, period)
    if function == "query_balance":
        if len(text) != 2:
            raise ChaincodeError("query_balance expects 2 arguments")
        return chaincode_query_balance(stub, *text)
    raise ChaincodeError(f"unknown function {function!r}")


# ---------------------------------------------------------------------------
# off-chain accounting


@dataclass
class BalanceSheet:
    period: str
    balances: dict[str, int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.balances.values())


@dataclass
class Settlement:
    transfers: list[tuple[str, str, int]] = field(default_factory=list)

    def apply(self, sheet: BalanceSheet) -> BalanceSheet:
        out = dict(sheet.balances)
        for payer, payee, amount in self.transfers:
            out[payer] += amount
            out[payee] -= amount
        return BalanceSheet(sheet.period, out)


def committed_records(ledger: Ledger, period: str | None = None) -> list[ResourceRecord]:
    records = []
    for tx in ledger.valid_transactions():
        p = tx.proposal
        if p.chaincode_id != CHAINCODE_ID or p.function != "record":
            continue
        for key, value in tx.rwset.writes:
            if key.startswith("rec/"):
                rec = ResourceRecord.from_bytes(value)
                if period is None or rec.period == period:
                    records.append(rec)
    return records


def balances_from_records(records: Iterable[ResourceRecord], period: str) -> BalanceSheet:
    contributed: Mapping[str, int] = defaultdict(int)
    consumed: Mapping[str, int] = defaultdict(int)
    for r in records:
        if r.period != period:
            continue
        if r.kind == CONTRIBUTION:
            contributed[r.participant] += r.value
        else:
            consumed[r.participant] += r.value
    participants = sorted(set(contributed) | set(consumed))
    total_contribution = sum(contributed.values())
    total_consumption = sum(consumed.values())
    if total_consumption == 0:
        return BalanceSheet(period, {p: 0 for p in participants})

    # consumption-proportional shares of the contribution pool, rounded with
    # the largest-remainder rule so the shares add up to the pool exactly
    shares = {}
    remainders = []
    for p in participants:
        q, r = divmod(total_contribution * consumed[p], total_consumption)
        shares[p] = q
        remainders.append((-r, p))
    leftover = total_contribution - sum(shares.values())
    for _, p in sorted(remainders)[:leftover]:
        shares[p] += 1
    return BalanceSheet(period, {p: contributed[p] - shares[p] for p in participants})


def compute_balances(ledger: Ledger, period: str) -> BalanceSheet:
    return balances_from_records(committed_records(ledger, period), period)


def settle(sheet: BalanceSheet) -> Settlement:
    """Greedy settlement: the largest debtor pays the largest creditor."""
    if sheet.total() != 0:
        raise SettlementError(f"balances sum to {sheet.total()}, not zero")
    credit = {p: b for p, b in sheet.balances.items() if b > 0}
    debt = {p: -b for p, b in sheet.balances.items() if b < 0}
    transfers = []
    while debt:
        payer = min(debt, key=lambda p: (-debt[p], p))
        payee = min(credit, key=lambda p: (-credit[p], p))
        amount = min(debt[payer], credit[payee])
        transfers.append((payer, payee, amount))
        debt[payer] -= amount
        credit[payee] -= amount
        if debt[payer] == 0:
            del debt[payer]
        if credit[payee] == 0:
            del credit[payee]
    return Settlement(transfers)
