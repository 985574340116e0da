"""Proof-of-work: nonce search, verification, difficulty retargeting.

`pow_try_mine` does the real thing (sequential nonces, SHA-256 under a
2**256/difficulty target). Inside the network simulator mining is modeled
instead: per-attempt success is Bernoulli(1/difficulty), so the time to the
next block is a geometric draw over the configured attempts-per-tick hash
rate. Both views have the same statistics; only the former produces headers
that actually satisfy the target.
"""

from __future__ import annotations

import math
import random
from typing import Optional

from ..core import Block, BlockHeader, Hash256, Transaction, ZERO32, hash_block, make_block

TWO_256 = 1 << 256


def target_of(difficulty: int) -> int:
    return TWO_256 // difficulty


def select_batch(pending: list[Transaction], batch_size: int, max_block_gas: int) -> list[Transaction]:
    """FIFO batch capped by count and by summed gas limits, whichever binds."""
    out, gas = [], 0
    for tx in pending:
        if len(out) >= batch_size:
            break
        if gas + tx.gas_limit > max_block_gas:
            break
        out.append(tx)
        gas += tx.gas_limit
    return out


def pow_try_mine(pending: list[Transaction], parent: BlockHeader, cfg, attempts: int,
                 rng_seed: int, *, proposer: int = 0, state_root: bytes = ZERO32,
                 receipts=(), timestamp: int = 0) -> Optional[Block]:
    """Try `attempts` sequential nonces from a seeded start; None if unlucky."""
    if attempts <= 0:
        raise ValueError("attempts must be > 0")
    txs = select_batch(pending, cfg.batch_size, cfg.max_block_gas)
    base = make_block(hash_block(parent), parent.height + 1, txs, state_root,
                      proposer, nonce=0, timestamp=timestamp, receipts=receipts)
    target = target_of(cfg.difficulty)
    start = random.Random(rng_seed).getrandbits(64)
    hdr = base.header
    for k in range(attempts):
        nonce = (start + k) & 0xFFFFFFFFFFFFFFFF
        candidate = BlockHeader(hdr.parent, hdr.height, hdr.tx_root, hdr.state_root,
                                hdr.proposer, nonce, hdr.timestamp)
        if int.from_bytes(hash_block(candidate), "big") < target:
            return Block(candidate, base.transactions, base.receipts)
    return None


def pow_verify(header: BlockHeader, cfg) -> bool:
    return int.from_bytes(hash_block(header), "big") < target_of(cfg.difficulty)


def pow_retarget(recent_intervals: list[int], difficulty: int, target_interval: int) -> int:
    """difficulty * target/mean(intervals), clamped to a factor of 2 per step."""
    if len(recent_intervals) < 10:
        raise ValueError("retarget needs at least 10 observed intervals")
    mean = sum(recent_intervals) / len(recent_intervals)
    if mean <= 0:
        mean = 1.0
    scaled = difficulty * target_interval / mean
    scaled = min(scaled, difficulty * 2.0)
    scaled = max(scaled, difficulty / 2.0)
    return max(1, round(scaled))


class ModeledMiner:
    """Samples block-finding times for one node at Bernoulli(1/difficulty)."""

    def __init__(self, node_id: int, cfg, seed: int):
        self.node_id = node_id
        self.cfg = cfg
        self.difficulty = cfg.difficulty
        self.rng = random.Random((seed << 20) ^ (node_id * 0x9E3779B1) ^ 0xB10C)
        self.intervals: list[int] = []
        self._last_block_tick: Optional[int] = None

    def draw_attempts(self) -> int:
        """Attempts until the next success, geometric with p = 1/difficulty."""
        p = 1.0 / self.difficulty
        u = self.rng.random()
        while u <= 0.0:
            u = self.rng.random()
        if p >= 1.0:
            return 1
        return max(1, math.ceil(math.log(u) / math.log1p(-p)))

    def draw_ticks(self) -> int:
        return max(1, math.ceil(self.draw_attempts() / self.cfg.attempts_per_tick))

    def observe_block(self, tick: int) -> None:
        """Feed the network-wide block arrival clock into the retarget loop."""
        if self._last_block_tick is not None:
            self.intervals.append(tick - self._last_block_tick)
            if len(self.intervals) > self.cfg.retarget_window:
                self.intervals.pop(0)
        self._last_block_tick = tick
        if self.cfg.retarget and len(self.intervals) >= self.cfg.retarget_window:
            self.difficulty = pow_retarget(self.intervals, self.difficulty,
                                           self.cfg.target_interval)
            self.intervals.clear()
