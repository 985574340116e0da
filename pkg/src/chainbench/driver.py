"""Benchmark driver: asynchronous submission, confirmation polling, metrics.

Clients pace transactions with a burst-1 token bucket and never wait for
results; a polling task walks `get_latest_blocks(h)` forward and matches
confirmed transaction ids against the outstanding queue. At the end of the
run the driver rescans the final main branch, so transactions whose block
was reorganized away are counted as unconfirmed rather than confirmed
(their first sighting is discarded).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .core import BlockTree, ForkRule, Hash256, Transaction
from .node import Node, REJECTED_BUSY


@dataclass
class RunConfig:
    clients: int = 1
    threads_per_client: int = 1
    rate: float = 8.0                 # tx/s per client thread
    duration: int = 10_000            # ticks of measured time
    poll_interval: int = 100
    blocking: bool = False
    seed: int = 0
    poll_node: int = 0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be > 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")

    @property
    def worker_count(self) -> int:
        return self.clients * self.threads_per_client


class NodeConnector:
    """In-process blockchain connector bound to one node; counts roundtrips."""

    def __init__(self, node: Node):
        self.node = node
        self.roundtrips = 0

    def deploy(self, code_name, init_args=(), **kw):
        self.roundtrips += 1
        return self.node.rpc_deploy(code_name, init_args, **kw)

    def invoke(self, tx: Transaction):
        self.roundtrips += 1
        return self.node.rpc_invoke(tx)

    def query(self, contract, function, args=()):
        self.roundtrips += 1
        return self.node.rpc_query(contract, function, args)

    def get_latest_blocks(self, h: int):
        self.roundtrips += 1
        return self.node.rpc_get_latest_blocks(h)

    def get_block(self, height=None, block_id=None):
        self.roundtrips += 1
        return self.node.rpc_get_block(height, block_id)

    def get_balance_at(self, contract, account, height):
        self.roundtrips += 1
        return self.node.rpc_get_balance_at(contract, account, height)


@dataclass
class MetricsRecord:
    start: int = 0
    duration: int = 0
    submitted: dict = field(default_factory=dict)      # tx_id -> submit tick
    rejected: int = 0
    sightings: dict = field(default_factory=dict)      # block_id -> first-seen tick
    tx_blocks: dict = field(default_factory=dict)      # tx_id -> block_id (last sighting)
    final: dict = field(default_factory=dict)          # tx_id -> (confirm_tick|None, status)
    queue_series: list = field(default_factory=list)   # (tick, outstanding)
    block_series: list = field(default_factory=list)   # (first_seen_tick, height, ntx)
    fork: dict = field(default_factory=dict)


@dataclass
class Summary:
    throughput: float
    latency_mean: float
    latency_p50: float
    latency_p95: float
    latency_p99: float
    submitted: int
    confirmed: int
    confirmed_ok: int
    unconfirmed: int
    rejected: int
    queue_max: int
    blocks_total: int
    blocks_main: int
    fork_ratio: float

    def as_dict(self) -> dict:
        return {
            "throughput": self.throughput,
            "latency_p50": self.latency_p50,
            "latency_p95": self.latency_p95,
            "latency_p99": self.latency_p99,
            "latency_mean": self.latency_mean,
            "submitted": self.submitted,
            "confirmed": self.confirmed,
            "confirmed_ok": self.confirmed_ok,
            "unconfirmed": self.unconfirmed,
            "rejected": self.rejected,
            "queue_max": self.queue_max,
            "blocks_total": self.blocks_total,
            "blocks_main": self.blocks_main,
            "fork_ratio": self.fork_ratio,
        }


def percentile(samples: list, q: float) -> float:
    """Nearest-rank percentile over a sorted or unsorted sample list."""
    if not samples:
        return 0.0
    ordered = sorted(samples)
    import math
    rank = max(1, math.ceil(q * len(ordered)))
    return float(ordered[rank - 1])


def union_fork_stats(nodes: list[Node]) -> dict:
    """Fork exposure over every block generated anywhere in the network."""
    union = BlockTree(nodes[0].tree.fork_rule if nodes else ForkRule.LONGEST)
    blocks = {}
    confirmed_by_users = {}
    for n in nodes:
        blocks.update(n.tree.blocks)
        confirmed_by_users.update(n.tree.confirmed_by_users)
    for blk in sorted(blocks.values(), key=lambda b: (b.header.height, b.id)):
        if blk.id != union.genesis:
            union.append(blk)
    main = set(union.main_branch())
    total = len(union.blocks) - 1           # generated blocks, genesis excluded
    on_main = len(main) - 1
    users_total = len(confirmed_by_users)
    users_main = sum(1 for bid in confirmed_by_users if bid in main)
    return {
        "blocks_total": total,
        "blocks_main": on_main,
        "fork_ratio": (on_main / total) if total else 1.0,
        "confirmed_by_users": users_total,
        "confirmed_on_main": users_main,
        "user_ratio": (users_main / users_total) if users_total else 1.0,
    }


def poll_confirmed(connector: NodeConnector, h: int, pending: dict,
                   record: MetricsRecord, now: int):
    """One polling round: advance h, match confirmed ids, update the record."""
    matched = []
    views = connector.get_latest_blocks(h)
    for view in views:
        if view.block_id not in record.sightings:
            record.sightings[view.block_id] = now
            record.block_series.append((now, view.height, len(view.tx_ids)))
        for txid in view.tx_ids:
            record.tx_blocks[txid] = view.block_id
            if txid in pending:
                del pending[txid]
                matched.append(txid)
        h = max(h, view.height)
    return h, matched


def run_benchmark(fabric, nodes: list[Node], cfg: RunConfig, workload) -> MetricsRecord:
    """Drive a workload against live nodes on the fabric; returns raw metrics."""
    admin = NodeConnector(nodes[0])
    contract = workload.setup(fabric, nodes, admin)
    record = MetricsRecord(start=fabric.now, duration=cfg.duration)
    if cfg.duration == 0:
        record.fork = union_fork_stats(nodes)
        return record

    start = fabric.now
    end = start + cfg.duration
    pending: dict[Hash256, int] = {}

    workers = []
    for w in range(cfg.worker_count):
        gen = workload.generator(w, contract, seed=(cfg.seed << 10) ^ (7919 * w + 13))
        connector = NodeConnector(nodes[w % len(nodes)])
        workers.append((gen, connector))

    gap = 1000.0 / cfg.rate

    def make_submitter(w: int):
        sent = {"k": 0}

        def fire(_tick):
            gen, connector = workers[w]
            tx = gen.get_next_transaction()
            if tx is not None:
                result = connector.invoke(tx)
                if result == REJECTED_BUSY:
                    record.rejected += 1
                else:
                    record.submitted[tx.id] = fabric.now
                    pending[tx.id] = fabric.now
            sent["k"] += 1
            nxt = start + round(sent["k"] * gap)
            if nxt < end:
                fabric.schedule(max(nxt, fabric.now), fire)
        return fire

    for w in range(cfg.worker_count):
        fabric.schedule(start + (w % max(1, int(gap))), make_submitter(w))

    poller = NodeConnector(nodes[cfg.poll_node % len(nodes)])
    state = {"h": 0}

    def poll(_tick):
        state["h"], _ = poll_confirmed(poller, state["h"], pending, record, fabric.now)
        record.queue_series.append((fabric.now, len(pending)))
        if fabric.now < end:
            fabric.schedule(min(end, fabric.now + cfg.poll_interval), poll)

    fabric.schedule(start + cfg.poll_interval, poll)
    fabric.run_until(end)

    # Final reconcile against the chain as it stands at the end of the run.
    poll_confirmed(poller, 0, pending, record, fabric.now)
    final_chain = {v.block_id for v in poller.get_latest_blocks(0)}
    poll_node = nodes[cfg.poll_node % len(nodes)]
    for txid, submit_tick in record.submitted.items():
        bid = record.tx_blocks.get(txid)
        if bid is not None and bid in final_chain:
            receipt = poll_node.receipts.get(txid)
            status = receipt.status if receipt is not None else "ok"
            record.final[txid] = (record.sightings.get(bid, fabric.now), status)
        else:
            record.final[txid] = (None, "unconfirmed")
    record.fork = union_fork_stats(nodes)
    return record


def compute_metrics(record: MetricsRecord) -> Summary:
    latencies = []
    confirmed = confirmed_ok = unconfirmed = 0
    for txid, submit_tick in record.submitted.items():
        confirm_tick, status = record.final.get(txid, (None, "unconfirmed"))
        if confirm_tick is None:
            unconfirmed += 1
            continue
        confirmed += 1
        if status == "ok":
            confirmed_ok += 1
        latencies.append(confirm_tick - submit_tick)
    seconds = record.duration / 1000.0
    fork = record.fork or {}
    return Summary(
        throughput=(confirmed_ok / seconds) if seconds > 0 else 0.0,
        latency_mean=(sum(latencies) / len(latencies)) if latencies else 0.0,
        latency_p50=percentile(latencies, 0.50),
        latency_p95=percentile(latencies, 0.95),
        latency_p99=percentile(latencies, 0.99),
        submitted=len(record.submitted),
        confirmed=confirmed,
        confirmed_ok=confirmed_ok,
        unconfirmed=unconfirmed,
        rejected=record.rejected,
        queue_max=max((q for _, q in record.queue_series), default=0),
        blocks_total=fork.get("blocks_total", 0),
        blocks_main=fork.get("blocks_main", 0),
        fork_ratio=fork.get("fork_ratio", 1.0),
    )


def run_blocking_probe(fabric, connector: NodeConnector, gen, n: int,
                       poll_interval: int = 50, timeout: int = 600_000) -> list:
    """Submit n transactions one at a time, waiting for each confirmation.

    Returns one latency sample (ticks) per transaction; None marks a timeout.
    """
    samples: list = []
    state = {"h": 0, "tx": None, "sent_at": 0, "deadline": 0}

    def submit(_tick):
        tx = gen.get_next_transaction()
        if tx is None:
            return
        result = connector.invoke(tx)
        state["tx"] = tx.id
        state["sent_at"] = fabric.now
        state["deadline"] = fabric.now + timeout
        if result == REJECTED_BUSY:
            samples.append(None)
            advance(_tick)
            return
        fabric.schedule(fabric.now + poll_interval, check)

    def check(_tick):
        views = connector.get_latest_blocks(state["h"])
        found = False
        for view in views:
            state["h"] = max(state["h"], view.height)
            if state["tx"] in view.tx_ids:
                found = True
        if found:
            samples.append(fabric.now - state["sent_at"])
            advance(_tick)
        elif fabric.now >= state["deadline"]:
            samples.append(None)
            advance(_tick)
        else:
            fabric.schedule(fabric.now + poll_interval, check)

    def advance(_tick):
        if len(samples) < n:
            fabric.schedule(fabric.now + 1, submit)

    fabric.schedule(fabric.now + 1, submit)
    limit = fabric.now + (timeout + 10_000) * n
    while len(samples) < n and fabric.now < limit:
        fabric.run_until(min(limit, fabric.now + 10_000))
    return samples
