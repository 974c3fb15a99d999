"""Shared builders and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from meshchain.codec import DecodeError
from meshchain.compensation import CONSUMPTION, CONTRIBUTION, record_args
from meshchain.ledger import (
    ZERO_DIGEST,
    Block,
    Endorsement,
    EndorsementPolicy,
    Ledger,
    ReadWriteSet,
    Transaction,
    TxProposal,
    WorldState,
    commit_block,
    mvcc_validate,
    simulate_chaincode,
    verify_chain,
)
from meshchain.topology import Link, NetworkGraph


def endorse(rwset: ReadWriteSet, *endorsers: str) -> tuple[Endorsement, ...]:
    return tuple(Endorsement(e, rwset.digest()) for e in endorsers)


def make_tx(tx_id, reads=(), writes=(), endorsers=("e1",)) -> Transaction:
    rw = ReadWriteSet(tuple(reads), tuple(writes))
    return Transaction(TxProposal(tx_id, "c", "test", "f"), rw, endorse(rw, *endorsers))


# ---------------------------------------------------------------------------
# chains built through the real chaincode


def build_ledger(n_blocks: int = 10, per_block: int = 3, seed: int = 0) -> Ledger:
    """A committed chain whose blocks mix valid and stale (invalid) records."""
    rng = np.random.default_rng(seed)
    policy = EndorsementPolicy({"e1"}, 1)
    ledger = Ledger()
    snapshot = ledger.state
    n = 0
    for _ in range(n_blocks):
        txs = []
        for _ in range(per_block):
            who = f"p{int(rng.integers(0, 3))}"
            kind = CONTRIBUTION if rng.random() < 0.5 else CONSUMPTION
            args = record_args(who, kind, int(rng.integers(0, 50)), f"0.{int(rng.integers(1, 99)):02d}", "2018-03")
            prop = TxProposal(f"tx{n:04d}", "c", "compensation", "record", args, float(n))
            n += 1
            # endorse against a possibly stale snapshot to provoke conflicts
            rw = simulate_chaincode(snapshot if rng.random() < 0.5 else ledger.state, prop)
            txs.append(Transaction(prop, rw, endorse(rw, "e1")))
        block = Block.build(ledger.tip.number + 1, ledger.tip.block_hash, txs)
        snapshot = ledger.state
        ledger = commit_block(ledger, block.with_validity(mvcc_validate(ledger.state, block, policy)))
    return ledger


def mutation_detected(data: bytes) -> bool:
    try:
        mutated = Ledger.from_bytes(data)
    except (DecodeError, ValueError):
        return True
    return not verify_chain(mutated)


def mutation_sweep(ledger: Ledger, masks=(0xFF, 0x01)) -> list[tuple[int, int]]:
    """Every (offset, xor-mask) whose mutation goes unnoticed."""
    data = bytearray(ledger.to_bytes())
    missed = []
    for i in range(len(data)):
        original = data[i]
        for m in masks:
            data[i] = original ^ m
            if not mutation_detected(bytes(data)):
                missed.append((i, m))
        data[i] = original
    return missed


# ---------------------------------------------------------------------------
# MVCC serial re-execution oracle


def random_mvcc_workload(rng: np.random.Generator, max_txs: int = 200, max_keys: int = 20):
    """(state, block, policy) with stale reads, blind writes and bad endorsements."""
    n_keys = int(rng.integers(1, max_keys + 1))
    keys = [f"k{i}" for i in range(n_keys)]
    state = WorldState()
    history = [state]
    for _ in range(int(rng.integers(0, 6))):
        chosen = rng.choice(keys, size=int(rng.integers(1, n_keys + 1)), replace=False)
        state = state.apply((k, b"v") for k in chosen)
        history.append(state)
    endorsers = ["e1", "e2", "e3"]
    k = int(rng.integers(1, 4))
    policy = EndorsementPolicy(set(endorsers), k)
    txs = []
    for i in range(int(rng.integers(0, max_txs + 1))):
        view = history[int(rng.integers(0, len(history)))]
        rk = rng.choice(keys, size=int(rng.integers(0, min(4, n_keys) + 1)), replace=False)
        wk = rng.choice(keys, size=int(rng.integers(0, min(4, n_keys) + 1)), replace=False)
        reads = [(str(key), view.version(str(key))) for key in rk]
        if rng.random() < 0.1 and reads:  # a version from the future
            reads[0] = (reads[0][0], reads[0][1] + 1)
        rw = ReadWriteSet(tuple(reads), tuple((str(key), f"{i}".encode()) for key in wk))
        if rng.random() < 0.85:
            signers = list(rng.choice(endorsers, size=int(rng.integers(k, 4)), replace=False))
        else:
            signers = list(rng.choice(endorsers + ["x9"], size=int(rng.integers(0, 5)), replace=True))
        ends = [Endorsement(s, rw.digest()) for s in signers]
        if ends and rng.random() < 0.05:
            ends[0] = Endorsement(ends[0].endorser_id, ZERO_DIGEST)
        txs.append(Transaction(TxProposal(f"t{i}", "c", "test", "f"), rw, tuple(ends)))
    # mvcc_validate only looks at the transactions; skip hashing
    return state, Block(1, ZERO_DIGEST, tuple(txs), ZERO_DIGEST), policy


def serial_oracle(state: WorldState, block: Block, policy: EndorsementPolicy) -> list[bool]:
    """Re-execute the block one transaction at a time against the running state."""
    flags = []
    for tx in block.txs:
        d = tx.rwset.digest()
        signed = {e.endorser_id for e in tx.endorsements
                  if e.endorser_id in policy.endorser_set}
        ok = all(e.response_digest == d for e in tx.endorsements) and len(signed) >= policy.required_k
        ok = ok and all(state.version(key) == v for key, v in tx.rwset.reads)
        if ok:
            state = state.apply(tx.rwset.writes)
        flags.append(ok)
    return flags


# ---------------------------------------------------------------------------
# centrality oracles


def all_shortest_paths(adj: dict[str, set[str]], s: str, t: str) -> list[list[str]]:
    """Enumerate every shortest s-t path by breadth-first layering."""
    frontier = [[s]]
    seen = {s}
    while frontier:
        done = [p for p in frontier if p[-1] == t]
        if done:
            return done
        nxt = []
        layer = set()
        for p in frontier:
            for v in sorted(adj[p[-1]]):
                if v not in seen:
                    nxt.append(p + [v])
                    layer.add(v)
        seen |= layer
        frontier = nxt
    return []


def brute_betweenness(adj: dict[str, set[str]]) -> dict[str, Fraction]:
    out = {v: Fraction(0) for v in adj}
    for s, t in itertools.combinations(sorted(adj), 2):
        paths = all_shortest_paths(adj, s, t)
        for v in adj:
            if v in (s, t):
                continue
            through = sum(1 for p in paths if v in p)
            if paths:
                out[v] += Fraction(through, len(paths))
    return out


def brute_degree(adj: dict[str, set[str]]) -> dict[str, Fraction]:
    n = len(adj)
    return {v: Fraction(len(adj[v]), n - 1) for v in adj}


def random_connected_adj(rng: np.random.Generator, n: int) -> dict[str, set[str]]:
    """Random spanning tree plus random extra edges."""
    nodes = [f"v{i}" for i in range(n)]
    adj = {v: set() for v in nodes}
    order = list(rng.permutation(n))
    for i in range(1, n):
        a, b = nodes[order[i]], nodes[order[int(rng.integers(0, i))]]
        adj[a].add(b)
        adj[b].add(a)
    p = float(rng.uniform(0, 0.6))
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p:
            adj[nodes[i]].add(nodes[j])
            adj[nodes[j]].add(nodes[i])
    return adj


def adj_graph(adj: dict[str, set[str]], cap: float = 10e6) -> NetworkGraph:
    edges = sorted({tuple(sorted((a, b))) for a in adj for b in adj[a]})
    return NetworkGraph(sorted(adj), [Link(a, b, cap, 0.0, 0.0) for a, b in edges])
