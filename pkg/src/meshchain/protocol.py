"""Execute-order-validate transaction flow as kernel-driven role handlers.

Roles and the messages they exchange:

    client    --proposal-->     endorser     (all policy endorsers)
    endorser  --response-->     client
    client    --submission-->   orderer
    orderer   --block-->        committers   (every ledger-holding peer)
    committer --notification--> client       (reference committer only)

Every handler that does real work first occupies its node's CPU; the work
takes effect when the CPU task completes. Links deliver messages per
(sender, receiver) pair in FIFO order.
"""

from __future__ import annotations

import bisect
import time
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

from .kernel import CPU_COMPLETE, MESSAGE, TIMER, CpuProfile, Event, Kernel, MemoryModel, rng_for
from .ledger import (
    GENESIS,
    Block,
    ChainIntegrityError,
    ChaincodeError,
    ChaincodeRegistry,
    Endorsement,
    EndorsementPolicy,
    Ledger,
    ReadWriteSet,
    Transaction,
    TxProposal,
    commit_block,
    mvcc_validate,
    simulate_chaincode,
)
from .metrics import (
    COMMITTED_INVALID,
    COMMITTED_VALID,
    QUERY_COMPLETED,
    REJECTED,
    RunMetrics,
    TxRecord,
)
from .topology import NetworkGraph, Router

SERIAL = "serial"
PARALLEL = "parallel"


class ConfigurationError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MessageSizes:
    """Wire sizes in bytes."""

    proposal: int = 3 * 1024
    response: int = 4 * 1024
    submission: int = 7 * 1024
    block_header: int = 1024
    block_per_tx: int = 7 * 1024
    notification: int = 512

    def block(self, n_txs: int) -> int:
        return self.block_header + self.block_per_tx * n_txs


@dataclass(frozen=True)
class RoleAssignment:
    client: str
    endorsers: tuple[str, ...]
    committers: tuple[str, ...]
    orderer: str

    def __post_init__(self):
        object.__setattr__(self, "endorsers", tuple(self.endorsers))
        object.__setattr__(self, "committers", tuple(self.committers))

    @property
    def reference_committer(self) -> str:
        return self.committers[0] if self.committers else self.endorsers[0]

    @property
    def ledger_nodes(self) -> tuple[str, ...]:
        """Every peer keeping a replica; endorsers always keep one."""
        out = list(self.committers)
        out += [e for e in self.endorsers if e not in out]
        return tuple(out)

    def nodes(self) -> list[str]:
        return sorted({self.client, self.orderer, *self.endorsers, *self.committers})

    def primary_role(self, node: str) -> str:
        if node in self.endorsers:
            return "endorser"
        if node == self.orderer:
            return "orderer"
        if node in self.committers:
            return "committer"
        if node == self.client:
            return "client"
        raise KeyError(node)

    def check(self, graph: NetworkGraph) -> None:
        if not self.endorsers:
            raise ConfigurationError("no endorsers configured")
        for n in self.nodes():
            if n not in graph:
                raise ConfigurationError(f"role assigned to unknown node {n}")


@dataclass(frozen=True)
class OrdererConfig:
    block_size: int = 10
    batch_timeout: float = 2.0

    def __post_init__(self):
        if self.block_size < 1:
            raise ConfigurationError("block_size must be >= 1")
        if not self.batch_timeout > 0:
            raise ConfigurationError("batch_timeout must be > 0")


@dataclass(frozen=True)
class Message:
    kind: str
    src: str
    dst: str
    size: int
    body: Any
    sent_at: float


@dataclass(frozen=True)
class ProposalResponse:
    tx_id: str
    endorser_id: str
    endorsement: Endorsement | None
    rwset: ReadWriteSet | None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.endorsement is not None


class OrderingService:
    """Solo orderer: arrival-ordered pending queue cut by size or timeout."""

    def __init__(self, config: OrdererConfig, tip: Block = GENESIS):
        self.config = config
        self.pending: list[tuple[float, str, Transaction]] = []
        self.tip_number = tip.number
        self.tip_hash = tip.block_hash

    def enqueue(self, tx: Transaction, now: float) -> None:
        bisect.insort(self.pending, (now, tx.tx_id, tx), key=lambda p: (p[0], p[1]))

    def deadline(self) -> float | None:
        if not self.pending:
            return None
        return self.pending[0][0] + self.config.batch_timeout

    def poll(self, now: float) -> list[Block]:
        blocks = []
        while len(self.pending) >= self.config.block_size:
            blocks.append(self._cut(self.config.block_size))
        deadline = self.deadline()
        if deadline is not None and now >= deadline:
            blocks.append(self._cut(len(self.pending)))
        return blocks

    def _cut(self, n: int) -> Block:
        txs = [tx for _, _, tx in self.pending[:n]]
        del self.pending[:n]
        block = Block.build(self.tip_number + 1, self.tip_hash, txs)
        self.tip_number, self.tip_hash = block.number, block.block_hash
        return block


def orderer_ingest(service: OrderingService, tx: Transaction, clock: float) -> Block | None:
    service.enqueue(tx, clock)
    blocks = service.poll(clock)
    return blocks[0] if blocks else None


@dataclass
class _ClientTx:
    proposal: TxProposal
    responses: list[ProposalResponse] = field(default_factory=list)
    decided: bool = False
    timeout: Event | None = None


class FabricSimulation:
    def __init__(
        self,
        graph: NetworkGraph,
        roles: RoleAssignment,
        *,
        required_k: int = 1,
        orderer: OrdererConfig | None = None,
        cpu: CpuProfile | None = None,
        sizes: MessageSizes | None = None,
        registry: ChaincodeRegistry | None = None,
        endorsement_timeout: float = 300.0,
        net_jitter: float = 0.0,
        seed: int = 0,
        memory: MemoryModel | None = None,
        window: float = 1.0,
    ):
        roles.check(graph)
        self.graph = graph
        self.roles = roles
        self.policy = EndorsementPolicy(frozenset(roles.endorsers), required_k)
        self.orderer_config = orderer or OrdererConfig()
        self.cpu = cpu or CpuProfile()
        self.sizes = sizes or MessageSizes()
        self.registry = registry
        self.endorsement_timeout = endorsement_timeout
        self.net_jitter = net_jitter
        self.memory_model = memory or MemoryModel()
        self.window = window

        self.kernel = Kernel()
        self.kernel.on(MESSAGE, self._on_message)
        self.kernel.on(CPU_COMPLETE, self._on_cpu)
        self.kernel.on(TIMER, self._on_timer)
        self.router = Router(graph)
        self._jitter_rng = rng_for(seed, "network.jitter")
        self._channel_tail: dict[tuple[str, str], float] = {}

        self.ledgers = {n: Ledger() for n in roles.ledger_nodes}
        self.ordering = OrderingService(self.orderer_config)
        self._seen: dict[str, set[str]] = {e: set() for e in roles.endorsers}
        self._client: dict[str, _ClientTx] = {}
        self.records: dict[str, TxRecord] = {}
        self.blocks_cut = 0
        self._batch_timer: Event | None = None
        self.sent: list[Message] = []
        self._serial_queue: list[TxProposal] = []
        self._mode = PARALLEL

    # -- workload -----------------------------------------------------------

    def submit(self, proposals: Sequence[TxProposal], mode: str = PARALLEL, start_time: float = 0.0) -> None:
        """Schedule proposals, all at ``start_time`` or one after another."""
        if mode not in (SERIAL, PARALLEL):
            raise ConfigurationError(f"unknown mode {mode!r}")
        self._mode = mode
        for p in proposals:
            if p.tx_id in self.records:
                raise ConfigurationError(f"duplicate tx_id {p.tx_id}")
            self.records[p.tx_id] = TxRecord(p.tx_id)
        if mode == PARALLEL:
            for p in proposals:
                self.kernel.schedule(start_time, self.roles.client, TIMER, ("issue", p))
        elif proposals:
            self._serial_queue = list(proposals[1:])
            self.kernel.schedule(start_time, self.roles.client, TIMER, ("issue", proposals[0]))

    def _finished(self, tx_id: str) -> None:
        if self._mode == SERIAL and self._serial_queue:
            nxt = self._serial_queue.pop(0)
            self.kernel.schedule(self.kernel.now, self.roles.client, TIMER, ("issue", nxt))

    # -- network ------------------------------------------------------------

    def send(self, kind: str, src: str, dst: str, size: int, body: Any) -> Message:
        now = self.kernel.now
        delay = self.router.transfer_time(src, dst, size)
        if self.net_jitter and src != dst:
            delay *= 1.0 + self.net_jitter * float(self._jitter_rng.uniform(-1.0, 1.0))
        arrival = max(now + delay, self._channel_tail.get((src, dst), now))
        self._channel_tail[(src, dst)] = arrival
        msg = Message(kind, src, dst, size, body, now)
        self.sent.append(msg)
        self.kernel.schedule(arrival, dst, MESSAGE, msg)
        return msg

    # -- client -------------------------------------------------------------

    def client_propose(self, proposal: TxProposal) -> list[Message]:
        if not self.roles.endorsers:
            raise ConfigurationError("no endorsers configured")
        proposal = replace(proposal, submit_time=self.kernel.now)
        rec = self.records.setdefault(proposal.tx_id, TxRecord(proposal.tx_id))
        rec.t_proposed = self.kernel.now
        st = self._client[proposal.tx_id] = _ClientTx(proposal)
        msgs = [
            self.send("proposal", self.roles.client, e, self.sizes.proposal, proposal)
            for e in self.roles.endorsers
        ]
        st.timeout = self.kernel.schedule(
            self.kernel.now + self.endorsement_timeout, self.roles.client, TIMER,
            ("endorsement-timeout", proposal.tx_id),
        )
        return msgs

    def client_collect(self, response: ProposalResponse) -> Message | None:
        st = self._client.get(response.tx_id)
        if st is None or st.decided:
            return None
        st.responses.append(response)
        groups: dict[bytes, list[ProposalResponse]] = {}
        for r in st.responses:
            if r.ok and r.endorser_id in self.policy.endorser_set:
                group = groups.setdefault(r.endorsement.response_digest, [])
                if all(g.endorser_id != r.endorser_id for g in group):
                    group.append(r)
        rec = self.records[response.tx_id]
        for group in groups.values():
            if len(group) >= self.policy.required_k:
                self._decide(st)
                rec.t_endorsed = self.kernel.now
                rwset = group[0].rwset
                if rwset.is_query:
                    rec.outcome = QUERY_COMPLETED
                    self._finished(rec.tx_id)
                    return None
                chosen = group[: self.policy.required_k]
                tx = Transaction(st.proposal, rwset, tuple(r.endorsement for r in chosen))
                rec.t_submitted = self.kernel.now
                return self.send("submission", self.roles.client, self.roles.orderer,
                                 self.sizes.submission, tx)
        if len(st.responses) >= len(self.roles.endorsers):
            self._reject(rec.tx_id)
        return None

    def _decide(self, st: _ClientTx) -> None:
        st.decided = True
        if st.timeout is not None:
            self.kernel.cancel(st.timeout)
            st.timeout = None

    def _reject(self, tx_id: str) -> None:
        st = self._client[tx_id]
        self._decide(st)
        self.records[tx_id].outcome = REJECTED
        self._finished(tx_id)

    # -- endorser -----------------------------------------------------------

    def endorser_handle(self, node: str, proposal: TxProposal) -> Message:
        seen = self._seen[node]

        def reject(reason: str) -> Message:
            body = ProposalResponse(proposal.tx_id, node, None, None, reason)
            return self.send("response", node, proposal.client_id, self.sizes.response, body)

        if not proposal.tx_id or not proposal.client_id or not proposal.chaincode_id:
            return reject("malformed proposal")
        if proposal.tx_id in seen:
            return reject("duplicate tx_id")
        seen.add(proposal.tx_id)
        try:
            rwset = simulate_chaincode(self.ledgers[node].state, proposal, self.registry)
        except ChaincodeError as exc:
            return reject(str(exc))
        body = ProposalResponse(proposal.tx_id, node, Endorsement(node, rwset.digest()), rwset)
        return self.send("response", node, proposal.client_id, self.sizes.response, body)

    # -- orderer ------------------------------------------------------------

    def _order(self, tx: Transaction) -> None:
        self.ordering.enqueue(tx, self.kernel.now)
        # cut after every same-instant arrival has been enqueued
        self.kernel.schedule(self.kernel.now, self.roles.orderer, TIMER, ("cut", None))
        self._arm_batch_timer()

    def _arm_batch_timer(self) -> None:
        deadline = self.ordering.deadline()
        current = self._batch_timer
        if current is not None and (deadline is None or current.time != max(deadline, self.kernel.now)):
            self.kernel.cancel(current)
            current = self._batch_timer = None
        if deadline is not None and current is None:
            self._batch_timer = self.kernel.schedule(
                max(deadline, self.kernel.now), self.roles.orderer, TIMER, ("batch-timeout", None)
            )

    def _cut(self) -> None:
        for block in self.ordering.poll(self.kernel.now):
            self.blocks_cut += 1
            for node in self.roles.ledger_nodes:
                self.send("block", self.roles.orderer, node, self.sizes.block(len(block.txs)), block)
        self._arm_batch_timer()

    # -- committer ----------------------------------------------------------

    def committer_handle(self, node: str, block: Block) -> list[Message]:
        ledger = self.ledgers[node]
        flags = mvcc_validate(ledger.state, block, self.policy)
        try:
            self.ledgers[node] = commit_block(ledger, block.with_validity(flags))
        except ChainIntegrityError as exc:
            raise SimulationError(f"committer {node}: {exc}") from exc
        if node != self.roles.reference_committer:
            return []
        out = []
        for tx, ok in zip(block.txs, flags):
            rec = self.records[tx.tx_id]
            rec.t_committed = self.kernel.now
            rec.outcome = COMMITTED_VALID if ok else COMMITTED_INVALID
            out.append(self.send("notification", node, tx.proposal.client_id,
                                 self.sizes.notification, (tx.tx_id, ok)))
        return out

    # -- dispatch -----------------------------------------------------------

    def _on_message(self, ev: Event) -> None:
        msg: Message = ev.payload
        node, cpu = ev.target, self.cpu
        if msg.kind == "proposal":
            self.kernel.occupy_cpu(node, cpu.cost_endorse, ("endorse", msg.body))
        elif msg.kind == "response":
            self.kernel.occupy_cpu(node, cpu.cost_client_per_response, ("collect", msg.body))
        elif msg.kind == "submission":
            self.kernel.occupy_cpu(node, cpu.cost_order_per_tx, ("order", msg.body))
        elif msg.kind == "block":
            cost = cpu.cost_validate_per_block + cpu.cost_validate_per_tx * len(msg.body.txs)
            self.kernel.occupy_cpu(node, cost, ("validate", msg.body))
        elif msg.kind == "notification":
            tx_id, _ = msg.body
            self.records[tx_id].t_notified = self.kernel.now
            self._finished(tx_id)
        else:
            raise SimulationError(f"unknown message kind {msg.kind!r}")

    def _on_cpu(self, ev: Event) -> None:
        action, body = ev.payload
        if action == "endorse":
            self.endorser_handle(ev.target, body)
        elif action == "collect":
            self.client_collect(body)
        elif action == "order":
            self._order(body)
        elif action == "validate":
            self.committer_handle(ev.target, body)

    def _on_timer(self, ev: Event) -> None:
        action, body = ev.payload
        if action == "issue":
            self.client_propose(body)
        elif action == "cut":
            self._cut()
        elif action == "batch-timeout":
            self._batch_timer = None
            self._cut()
        elif action == "endorsement-timeout":
            st = self._client.get(body)
            if st is not None and not st.decided:
                self._reject(body)

    # -- run ----------------------------------------------------------------

    def run(self, until: float | None = None) -> RunMetrics:
        wall = time.perf_counter()
        end = self.kernel.run(until)
        horizon = until if until is not None else None
        nodes = self.roles.nodes()
        timeline = self.kernel.utilization(nodes, self.window, horizon)
        n_windows = len(next(iter(timeline.busy.values()), []))
        roles = {n: self.roles.primary_role(n) for n in nodes}
        memory = {
            n: self.kernel.memory(n, roles[n], self.memory_model, self.window, n_windows)
            for n in nodes
        }
        return RunMetrics(
            tx_records=list(self.records.values()),
            utilization=timeline,
            roles=roles,
            memory=memory,
            blocks_cut=self.blocks_cut,
            end_time=end,
            wall_seconds=time.perf_counter() - wall,
        )
