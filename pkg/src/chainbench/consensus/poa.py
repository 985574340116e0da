"""Proof-of-authority: fixed rotating time slots."""

from __future__ import annotations

from typing import Optional

from ..core import Block, BlockHeader, Transaction, ZERO32, hash_block, make_block
from .pow import select_batch


def poa_slot(now: int, cfg) -> int:
    """Authority index owning the slot at the given tick."""
    return (now // cfg.step_duration) % len(cfg.authorities)


class PoaEngine:
    """Block production for one authority; at most one block per own slot."""

    def __init__(self, node_id: int, cfg):
        self.node_id = node_id
        self.cfg = cfg
        try:
            self.authority_index = cfg.authorities.index(node_id)
        except ValueError:
            self.authority_index = None
        self._last_slot_produced = -1

    def my_next_slot_start(self, now: int) -> Optional[int]:
        """First tick >= now at which this node's slot begins (None if not an authority)."""
        if self.authority_index is None:
            return None
        period = self.cfg.step_duration * len(self.cfg.authorities)
        base = (now // period) * period + self.authority_index * self.cfg.step_duration
        while base < now:
            base += period
        return base

    def produce(self, pending: list[Transaction], parent: BlockHeader, now: int, *,
                state_root: bytes = ZERO32, receipts=()) -> Optional[Block]:
        if self.authority_index is None:
            return None
        if poa_slot(now, self.cfg) != self.authority_index:
            return None
        slot_number = now // self.cfg.step_duration
        if slot_number == self._last_slot_produced:
            return None
        self._last_slot_produced = slot_number
        txs = select_batch(pending, self.cfg.batch_size, self.cfg.max_block_gas)
        return make_block(hash_block(parent), parent.height + 1, txs, state_root,
                          self.node_id, nonce=0, timestamp=now, receipts=receipts)


def poa_produce(engine: PoaEngine, pending, parent, now: int, cfg=None, **kw) -> Optional[Block]:
    return engine.produce(pending, parent, now, **kw)
