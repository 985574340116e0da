"""A fully validating node: consensus engine + state store + contract runtime.

Nodes exchange tagged byte payloads over the fabric (transactions, blocks,
block requests, PBFT traffic). Anything that fails to decode or verify is
dropped, so byte-flip corruption degrades into message loss. The node keeps
its state store synchronized with the fork-choice main branch, rolling back
through version history and re-executing on reorganizations.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field as dc_field
from typing import Optional

from . import codec
from .core import (
    AppendResult, Block, BlockTree, BlockValidationError, ForkRule, Hash256,
    Transaction, ZERO32, GENESIS_ID, _field, _u64, verify_transaction,
)
from .consensus import ConsensusConfig, ModeledMiner, PoaEngine, PbftReplica
from .consensus.pbft import decode_pbft, encode_pbft
from .consensus.pow import select_batch
from .execution import DEFAULT_SCHEDULE, GasSchedule, Receipt, contract_id, execute_tx
from .execution import ContractError, ExecutionContext
from .statestore import StateKey, StateStore

MSG_TX = b"T"
MSG_BLOCK = b"B"
MSG_GET_BLOCK = b"G"
MSG_PBFT = b"P"

REJECTED_BUSY = "rejected-busy"


def _gossip_mac_key(node_id: int) -> bytes:
    return hashlib.sha256(b"gossip:" + _u64(node_id)).digest()


class StateDivergenceError(Exception):
    """A block's declared state root does not match deterministic re-execution."""


@dataclass
class NodeConfig:
    node_id: int
    consensus: ConsensusConfig
    store_variant: str = "patricia"
    gas: GasSchedule = DEFAULT_SCHEDULE
    confirmation_length: int = 5
    admission_rate: Optional[float] = None    # accepted txs per second
    gossip_p: float = 1.0
    sig_verify_cost: int = 0                  # ticks per submitted tx, serialized
    state_read_cost: int = 0                  # ticks per state read during block build
    state_write_cost: int = 0

    def __post_init__(self):
        if self.consensus.kind == "pbft":
            self.confirmation_length = 0      # immediate confirmation


@dataclass(frozen=True)
class ConfirmedBlockView:
    height: int
    block_id: Hash256
    tx_ids: tuple
    state_root: Hash256


@dataclass(frozen=True)
class DeployHandle:
    contract: Hash256
    tx_id: Hash256


class Node:
    def __init__(self, cfg: NodeConfig, fabric, seed: int = 0):
        self.cfg = cfg
        self.id = cfg.node_id
        self.fabric = fabric
        self.store = StateStore(cfg.store_variant)
        self.tree = BlockTree(ForkRule(cfg.consensus.fork_rule))
        self.pending: dict[Hash256, Transaction] = {}
        self.known_txs: dict[Hash256, bool] = {}
        self.receipts: dict[Hash256, Receipt] = {}
        self.rng = random.Random((seed << 16) ^ (self.id * 0x1F123BB5) ^ 0x0DE)
        self.exec_branch: list[Hash256] = [self.tree.genesis]
        self.reorgs = 0
        self.rejected_txs = 0
        kind = cfg.consensus.kind
        self.miner = ModeledMiner(self.id, cfg.consensus, seed) if kind == "pow" else None
        self.poa = PoaEngine(self.id, cfg.consensus) if kind == "poa" else None
        self.replica = PbftReplica(self.id, cfg.consensus, GENESIS_ID) if kind == "pbft" else None
        self._mine_generation = 0
        self._propose_wakeup_armed = False
        self._tokens = 1.0
        self._tokens_tick = 0
        self._sig_free_tick = 0
        fabric.register(self.id, self.on_message)

    # ------------------------------------------------------------------ setup

    def start(self) -> None:
        kind = self.cfg.consensus.kind
        if kind == "pow":
            self._restart_mining()
        elif kind == "poa":
            nxt = self.poa.my_next_slot_start(self.fabric.now)
            if nxt is not None:
                self.fabric.schedule(nxt, self._on_poa_slot, owner=self.id)
        elif kind == "pbft":
            self.fabric.schedule(self.fabric.now + self.cfg.consensus.view_timeout,
                                 self._on_pbft_timer, owner=self.id)

    # ------------------------------------------------------------- rpc surface

    def rpc_invoke(self, tx: Transaction):
        """Admit a signed transaction into the pending pool (asynchronous)."""
        if self.fabric.is_crashed(self.id):
            return REJECTED_BUSY
        if not self._admit():
            self.rejected_txs += 1
            return REJECTED_BUSY
        if not verify_transaction(tx) or tx.gas_limit > self.cfg.consensus.max_block_gas:
            self.rejected_txs += 1
            return REJECTED_BUSY
        cost = self.cfg.sig_verify_cost
        if cost > 0:
            self._sig_free_tick = max(self._sig_free_tick, self.fabric.now) + cost
            self.fabric.schedule(self._sig_free_tick,
                                 lambda _t, tx=tx: self._accept_tx(tx, gossip=True),
                                 owner=self.id)
        else:
            self._accept_tx(tx, gossip=True)
        return tx.id

    def rpc_deploy(self, code_name: str, init_args=(), *, sender: str = "deployer",
                   nonce: int = 0, gas_limit: int = 10**9) -> DeployHandle:
        from .core import make_transaction
        cid = contract_id(sender, nonce)
        tx = make_transaction(sender, cid, "__deploy__", (code_name, *tuple(init_args)),
                              nonce=nonce, gas_limit=gas_limit)
        result = self.rpc_invoke(tx)
        if result == REJECTED_BUSY:
            raise RuntimeError("deploy rejected by admission control")
        return DeployHandle(cid, tx.id)

    def rpc_get_latest_blocks(self, h: int) -> list[ConfirmedBlockView]:
        """Confirmed blocks with height > h, ascending."""
        views = []
        for bid in self._confirmed_chain():
            blk = self.tree.blocks[bid]
            if blk.height > h:
                views.append(ConfirmedBlockView(
                    blk.height, bid, tuple(t.id for t in blk.transactions),
                    blk.header.state_root))
        return views

    def rpc_get_block(self, height: Optional[int] = None,
                      block_id: Optional[Hash256] = None) -> Optional[Block]:
        if block_id is not None:
            return self.tree.get(block_id)
        if height is None:
            raise ValueError("need height or block_id")
        branch = self.tree.main_branch()
        if 0 <= height < len(branch):
            return self.tree.blocks[branch[height]]
        return None

    def rpc_get_balance_at(self, contract: Hash256, account: str, height: int) -> Optional[int]:
        raw = self.store.get_at(StateKey(contract, b"bal:" + account.encode()), height)
        return int(raw) if raw is not None else None

    def rpc_query(self, contract: Hash256, function: str, args=()):
        """Read-only local execution: no transaction, no gas charged to anyone."""
        from . import contracts
        ctx = ExecutionContext(self.store, contract, self.cfg.gas, gas_limit=1 << 62,
                               block_height=self._exec_height())
        code = ctx.get(b"__code__")
        if code is None:
            raise ContractError("unknown contract")
        return contracts.CATALOG[code.decode()].call(ctx, function, tuple(args))

    # --------------------------------------------------------------- internals

    def _admit(self) -> bool:
        rate = self.cfg.admission_rate
        if rate is None:
            return True
        now = self.fabric.now
        self._tokens = min(1.0, self._tokens + (now - self._tokens_tick) * rate / 1000.0)
        self._tokens_tick = now
        if self._tokens >= 1.0:
            self._tokens -= 1.0
            return True
        return False

    def _accept_tx(self, tx: Transaction, gossip: bool) -> None:
        if tx.id in self.known_txs:
            return
        self.known_txs[tx.id] = True
        if tx.id not in self.receipts:
            self.pending[tx.id] = tx
        if gossip:
            payload = MSG_TX + codec.encode_tx(tx)
            for peer in self.fabric.node_ids:
                if peer != self.id and (self.cfg.gossip_p >= 1.0
                                        or self.rng.random() < self.cfg.gossip_p):
                    self.fabric.send(self.id, peer, payload)
        self._maybe_propose()

    def _exec_height(self) -> int:
        return len(self.exec_branch) - 1

    def _confirmed_chain(self) -> list[Hash256]:
        branch = self.tree.main_branch()
        depth = self.cfg.confirmation_length
        cut = len(branch) - depth if depth > 0 else len(branch)
        confirmed = branch[1:cut]  # genesis is implicit, never reported
        for bid in confirmed:
            self.tree.mark_confirmed(bid)
        return confirmed

    # ------------------------------------------------------------ messaging

    def _block_payload(self, block: Block) -> bytes:
        body = codec.encode_block(block)
        mac = hashlib.sha256(_gossip_mac_key(self.id) + body).digest()
        return MSG_BLOCK + _field(mac) + body

    def on_message(self, from_node: int, payload: bytes, tick: int) -> None:
        kind, body = payload[:1], payload[1:]
        try:
            if kind == MSG_TX:
                tx = codec.decode_tx(body)
                if verify_transaction(tx):
                    self._accept_tx(tx, gossip=False)
            elif kind == MSG_BLOCK:
                r = codec.Reader(body)
                mac = r.field()
                rest = body[r.pos:]
                if mac != hashlib.sha256(_gossip_mac_key(from_node) + rest).digest():
                    return
                self._handle_block(codec.decode_block(rest), from_node)
            elif kind == MSG_GET_BLOCK:
                r = codec.Reader(body)
                bid = r.field()
                blk = self.tree.get(bid)
                if blk is not None:
                    self.fabric.send(self.id, from_node, self._block_payload(blk))
            elif kind == MSG_PBFT:
                if self.replica is not None:
                    msg = decode_pbft(body)
                    out, committed = self.replica.on_message(msg, tick)
                    self._pbft_after_step(out, committed)
        except (codec.CodecError, BlockValidationError):
            pass  # corrupted or malformed traffic is dropped

    def _send_pbft(self, dest: Optional[int], msg) -> None:
        payload = MSG_PBFT + encode_pbft(msg)
        if dest is None:
            self.fabric.broadcast(self.id, payload)
        else:
            self.fabric.send(self.id, dest, payload)

    # --------------------------------------------------------------- pbft glue

    def _on_pbft_timer(self, tick: int) -> None:
        has_work = bool(self.pending)
        out, committed = self.replica.on_timeout(tick, has_work)
        self._pbft_after_step(out, committed)
        self.fabric.schedule(tick + self.cfg.consensus.view_timeout,
                             self._on_pbft_timer, owner=self.id)

    def _pbft_after_step(self, out, committed) -> None:
        for dest, msg in out:
            self._send_pbft(dest, msg)
        for block in committed:
            self._apply_pbft_commit(block)
        self._maybe_propose()

    def _apply_pbft_commit(self, block: Block) -> None:
        if block.id in self.tree.blocks:
            return
        self._execute_block(block)
        self.tree.append(block)
        self.exec_branch.append(block.id)
        for tx in block.transactions:
            self.pending.pop(tx.id, None)
        self._confirmed_chain()

    def _maybe_propose(self) -> None:
        if self.replica is None:
            return
        now = self.fabric.now
        if not self.pending:
            return
        if not (self.replica.is_leader() and self.replica.in_flight is None
                and self.replica.view >= self.replica.target_view):
            return
        if not self.replica.can_propose(now):
            if not self._propose_wakeup_armed:
                self._propose_wakeup_armed = True
                at = self.replica.last_propose_tick + self.cfg.consensus.batch_interval
                self.fabric.schedule(max(at, now), self._on_propose_wakeup, owner=self.id)
            return
        block = self._build_block(parent_id=self.replica.last_block_id,
                                  height=self.replica.next_seq,
                                  timestamp=now, nonce=0)
        if not block.transactions:
            return
        out, committed = self.replica.propose(block, now)
        self._pbft_after_step(out, committed)

    def _on_propose_wakeup(self, tick: int) -> None:
        self._propose_wakeup_armed = False
        self._maybe_propose()

    # ------------------------------------------------------------ block building

    def _build_block(self, parent_id: Hash256, height: int, timestamp: int,
                     nonce: int) -> Block:
        """Assemble and speculatively execute the next block on the main branch."""
        from .core import make_block
        cfgc = self.cfg.consensus
        txs = select_batch(list(self.pending.values()), cfgc.batch_size, cfgc.max_block_gas)
        receipts = []
        for tx in txs:
            receipts.append(execute_tx(self.store, tx, self.cfg.gas, height))
        state_root = self.store.root()
        self.store.rollback(height - 1)
        return make_block(parent_id, height, txs, state_root, self.id,
                          nonce=nonce, timestamp=timestamp, receipts=receipts)

    def _execute_block(self, block: Block) -> None:
        height = block.height
        for tx in block.transactions:
            receipt = execute_tx(self.store, tx, self.cfg.gas, height)
            self.receipts[tx.id] = receipt
        root = self.store.root()
        if root != block.header.state_root:
            raise StateDivergenceError(
                f"node {self.id} block {block.height}: root {root.hex()[:12]} != "
                f"declared {block.header.state_root.hex()[:12]}")

    # ------------------------------------------------------------- pow mining

    def _restart_mining(self) -> None:
        self._mine_generation += 1
        gen = self._mine_generation
        delay = self.miner.draw_ticks()
        self.fabric.schedule(self.fabric.now + delay,
                             lambda tick, g=gen: self._on_mined(tick, g),
                             owner=self.id)

    def _on_mined(self, tick: int, generation: int) -> None:
        if generation != self._mine_generation:
            return  # tip changed while this draw was pending
        tip = self.tree.tip()
        height = self.tree.height_of(tip) + 1
        block = self._build_block(tip, height, tick, nonce=self.rng.getrandbits(64))
        self._adopt_block(block, relay=True)
        self._restart_mining()

    # -------------------------------------------------------------- poa slots

    def _on_poa_slot(self, tick: int) -> None:
        tip = self.tree.tip()
        parent = self.tree.blocks[tip].header
        pending = select_batch(list(self.pending.values()),
                               self.cfg.consensus.batch_size,
                               self.cfg.consensus.max_block_gas)
        receipts = []
        for tx in pending:
            receipts.append(execute_tx(self.store, tx, self.cfg.gas, parent.height + 1))
        state_root = self.store.root()
        self.store.rollback(parent.height)
        block = self.poa.produce(pending, parent, tick, state_root=state_root,
                                 receipts=receipts)
        if block is not None:
            self._adopt_block(block, relay=True)
        nxt = self.poa.my_next_slot_start(tick + 1)
        self.fabric.schedule(nxt, self._on_poa_slot, owner=self.id)

    # ---------------------------------------------------------- block handling

    def _handle_block(self, block: Block, from_node: int) -> None:
        if block.id in self.tree.blocks:
            return
        for tx in block.transactions:
            if not verify_transaction(tx):
                return  # corrupted in flight; drop whole block
        self._adopt_block(block, relay=True, source=from_node)

    def _adopt_block(self, block: Block, relay: bool, source: Optional[int] = None) -> None:
        old_tip = self.exec_branch[-1]
        result = self.tree.append(block)
        if result is AppendResult.DUPLICATE:
            return
        if result is AppendResult.ORPHANED:
            if source is not None:
                self.fabric.send(self.id, source,
                                 MSG_GET_BLOCK + _field(block.header.parent))
            return
        if relay:
            self.fabric.broadcast(self.id, self._block_payload(block),
                                  exclude=(source,) if source is not None else ())
        new_tip = self.tree.tip()
        if new_tip != old_tip:
            self._sync_state_to(new_tip)
            if self.miner is not None:
                self.miner.observe_block(self.tree.blocks[new_tip].header.timestamp)
                self._restart_mining()

    def _sync_state_to(self, tip: Hash256) -> None:
        """Roll back to the fork point and re-execute the new main branch."""
        new_branch = self.tree.path_to(tip)
        common = 0
        for old, new in zip(self.exec_branch, new_branch):
            if old != new:
                break
            common += 1
        abandoned = self.exec_branch[common:]
        if abandoned:
            self.reorgs += 1
            self.store.rollback(common - 1)
        new_part = new_branch[common:]
        for bid in new_part:
            self._execute_block(self.tree.blocks[bid])
        # Pool bookkeeping: txs in adopted blocks leave the pool, txs only in
        # abandoned blocks come back.
        new_ids = {t.id for b in new_part for t in self.tree.blocks[b].transactions}
        for bid in abandoned:
            for tx in self.tree.blocks[bid].transactions:
                if tx.id not in new_ids and tx.id in self.known_txs:
                    self.pending[tx.id] = tx
        for b in new_part:
            for tx in self.tree.blocks[b].transactions:
                self.pending.pop(tx.id, None)
        self.exec_branch = new_branch
        self._confirmed_chain()
