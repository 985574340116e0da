"""Blocks, transactions, the block tree and fork-choice rules.

Every commitment in the system is a SHA-256 digest over a canonical,
length-prefixed big-endian serialization of the fields in declared order.
Hashes are raw 32-byte values (``Hash256`` is an alias for ``bytes``).
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

Hash256 = bytes
AccountId = str
NodeId = int

ZERO32 = b"\x00" * 32

ORPHAN_BUFFER_LIMIT = 1024


def sha256(data: bytes) -> Hash256:
    return hashlib.sha256(data).digest()


def _field(b: bytes) -> bytes:
    """Length-prefix one field (4-byte big-endian length + payload)."""
    return len(b).to_bytes(4, "big") + b


def _u64(n: int) -> bytes:
    return int(n).to_bytes(8, "big")


def _i64(n: int) -> bytes:
    return int(n).to_bytes(8, "big", signed=True)


def encode_args(args: Iterable) -> bytes:
    """Canonical encoding of a transaction argument list.

    Supported value kinds: bytes, int, str. Each item is tagged so the
    encoding is injective across types.
    """
    items = list(args)
    out = [_u64(len(items))]
    for a in items:
        if isinstance(a, bool):
            raise TypeError("bool is not a valid transaction argument")
        if isinstance(a, bytes):
            out.append(b"b" + _field(a))
        elif isinstance(a, int):
            out.append(b"i" + _i64(a))
        elif isinstance(a, str):
            out.append(b"s" + _field(a.encode()))
        else:
            raise TypeError(f"unsupported argument type: {type(a).__name__}")
    return b"".join(out)


def account_secret(account: AccountId) -> bytes:
    """Simulated per-account signing secret (not real cryptography)."""
    return sha256(b"secret:" + account.encode())


@dataclass(frozen=True)
class Transaction:
    id: Hash256
    sender: AccountId
    contract: Hash256
    function: str
    args: tuple
    value: int
    nonce: int
    gas_limit: int
    signature: bytes

    def content_bytes(self) -> bytes:
        return b"".join(
            [
                _field(self.sender.encode()),
                _field(self.contract),
                _field(self.function.encode()),
                _field(encode_args(self.args)),
                _field(_u64(self.value)),
                _field(_u64(self.nonce)),
                _field(_u64(self.gas_limit)),
            ]
        )


def make_transaction(
    sender: AccountId,
    contract: Hash256,
    function: str,
    args: Iterable = (),
    value: int = 0,
    nonce: int = 0,
    gas_limit: int = 10_000_000,
) -> Transaction:
    """Build and sign a transaction; id = SHA-256 of the content fields."""
    if value < 0:
        raise ValueError("transaction value must be >= 0")
    if gas_limit <= 0:
        raise ValueError("gas_limit must be > 0")
    tx = Transaction(ZERO32, sender, bytes(contract), function, tuple(args), value, nonce, gas_limit, ZERO32)
    content = tx.content_bytes()
    txid = sha256(content)
    sig = sha256(account_secret(sender) + content)
    return Transaction(txid, sender, bytes(contract), function, tuple(args), value, nonce, gas_limit, sig)


def verify_transaction(tx: Transaction) -> bool:
    content = tx.content_bytes()
    if tx.id != sha256(content):
        return False
    return tx.signature == sha256(account_secret(tx.sender) + content)


@dataclass(frozen=True)
class BlockHeader:
    parent: Hash256
    height: int
    tx_root: Hash256
    state_root: Hash256
    proposer: NodeId
    nonce: int
    timestamp: int


def hash_block(header: BlockHeader) -> Hash256:
    """Block id: SHA-256 over the canonical header serialization."""
    return sha256(
        b"".join(
            [
                _field(header.parent),
                _field(_u64(header.height)),
                _field(header.tx_root),
                _field(header.state_root),
                _field(_u64(header.proposer)),
                _field(_u64(header.nonce)),
                _field(_u64(header.timestamp)),
            ]
        )
    )


def tx_merkle_root(txs: list[Transaction]) -> Hash256:
    """Binary Merkle root over transaction ids.

    An odd node at any level is paired with itself; the empty list commits
    to the all-zero hash; a single leaf is its own root.
    """
    level = [tx.id for tx in txs]
    if not level:
        return ZERO32
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            left = level[i]
            right = level[i + 1] if i + 1 < len(level) else level[i]
            nxt.append(sha256(left + right))
        level = nxt
    return level[0]


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple
    receipts: tuple = ()

    @property
    def id(self) -> Hash256:
        return hash_block(self.header)

    @property
    def height(self) -> int:
        return self.header.height


def make_block(
    parent: Hash256,
    height: int,
    txs: Iterable[Transaction],
    state_root: Hash256,
    proposer: NodeId,
    nonce: int = 0,
    timestamp: int = 0,
    receipts: Iterable = (),
) -> Block:
    txs = tuple(txs)
    header = BlockHeader(
        parent=bytes(parent),
        height=height,
        tx_root=tx_merkle_root(list(txs)),
        state_root=bytes(state_root),
        proposer=proposer,
        nonce=nonce,
        timestamp=timestamp,
    )
    return Block(header=header, transactions=txs, receipts=tuple(receipts))


def genesis_block() -> Block:
    """The fixed genesis: height 0, all-zero parent and roots, timestamp 0."""
    return make_block(parent=ZERO32, height=0, txs=(), state_root=ZERO32, proposer=0)


GENESIS = genesis_block()
GENESIS_ID = GENESIS.id


class AppendResult(Enum):
    ACCEPTED = "accepted"
    DUPLICATE = "duplicate"
    ORPHANED = "orphaned"


class BlockValidationError(Exception):
    """Raised for malformed blocks (e.g. tx_root mismatch)."""


class ForkRule(Enum):
    LONGEST = "longest"
    GHOST = "ghost"


@dataclass
class BlockTree:
    """All blocks a node has ever observed, indexed by id.

    The main branch is determined solely by :func:`fork_choice`. Blocks
    whose parent is unknown wait in a bounded FIFO orphan buffer and are
    re-tried when the parent arrives.
    """

    fork_rule: ForkRule = ForkRule.LONGEST
    blocks: dict = field(default_factory=dict)          # id -> Block
    children: dict = field(default_factory=dict)        # id -> [child ids]
    orphans: OrderedDict = field(default_factory=OrderedDict)  # id -> Block
    confirmed_by_users: dict = field(default_factory=dict)     # id -> height

    def __post_init__(self):
        g = genesis_block()
        self.genesis = g.id
        self.blocks[g.id] = g
        self.children[g.id] = []

    def __contains__(self, block_id: Hash256) -> bool:
        return block_id in self.blocks

    def get(self, block_id: Hash256) -> Optional[Block]:
        return self.blocks.get(block_id)

    def append(self, block: Block) -> AppendResult:
        bid = block.id
        if bid in self.blocks:
            return AppendResult.DUPLICATE
        if block.header.tx_root != tx_merkle_root(list(block.transactions)):
            raise BlockValidationError("tx_root does not match transaction list")
        if block.header.parent not in self.blocks:
            if bid not in self.orphans:
                self.orphans[bid] = block
                while len(self.orphans) > ORPHAN_BUFFER_LIMIT:
                    self.orphans.popitem(last=False)
            return AppendResult.ORPHANED
        parent = self.blocks[block.header.parent]
        if block.header.height != parent.header.height + 1:
            raise BlockValidationError("height is not parent height + 1")
        self.blocks[bid] = block
        self.children[bid] = []
        self.children[block.header.parent].append(bid)
        self._adopt_orphans(bid)
        return AppendResult.ACCEPTED

    def _adopt_orphans(self, parent_id: Hash256) -> None:
        ready = [b for b in self.orphans.values() if b.header.parent == parent_id]
        for b in ready:
            del self.orphans[b.id]
            self.append(b)

    def tip(self) -> Hash256:
        return fork_choice(self, self.fork_rule)

    def path_to(self, block_id: Hash256) -> list[Hash256]:
        """Ids from genesis to block_id inclusive."""
        path = []
        cur = block_id
        while True:
            path.append(cur)
            if cur == self.genesis:
                break
            cur = self.blocks[cur].header.parent
        path.reverse()
        return path

    def main_branch(self) -> list[Hash256]:
        return self.path_to(self.tip())

    def height_of(self, block_id: Hash256) -> int:
        return self.blocks[block_id].header.height

    def mark_confirmed(self, block_id: Hash256) -> None:
        if block_id not in self.confirmed_by_users:
            self.confirmed_by_users[block_id] = self.height_of(block_id)


def fork_choice(tree: BlockTree, rule: ForkRule | str = None) -> Hash256:
    """Tip of the main branch under the given rule.

    ``longest`` picks the maximum-height block; ``ghost`` walks from genesis
    taking at each step the child whose subtree holds the most blocks. Ties
    break to the lexicographically smallest block id in both rules.
    """
    if rule is None:
        rule = tree.fork_rule
    if isinstance(rule, str):
        rule = ForkRule(rule)
    if rule is ForkRule.LONGEST:
        best = tree.genesis
        best_h = 0
        for bid, blk in tree.blocks.items():
            h = blk.header.height
            if h > best_h or (h == best_h and bid < best):
                best, best_h = bid, h
        return best
    # GHOST: heaviest-subtree walk, weight = block count of the subtree.
    weights = subtree_weights(tree)
    cur = tree.genesis
    while True:
        kids = tree.children[cur]
        if not kids:
            return cur
        cur = min(kids, key=lambda c: (-weights[c], c))


def subtree_weights(tree: BlockTree) -> dict:
    """Number of blocks in the subtree rooted at each block (inclusive)."""
    weights = {}
    # Iterative post-order; trees are shallow but may be long chains.
    stack = [(tree.genesis, False)]
    while stack:
        bid, expanded = stack.pop()
        if expanded:
            weights[bid] = 1 + sum(weights[c] for c in tree.children[bid])
        else:
            stack.append((bid, True))
            for c in tree.children[bid]:
                stack.append((c, False))
    return weights


def fork_gap(tree: BlockTree, rule: ForkRule | str = None) -> tuple[int, int, float]:
    """(total blocks, main-branch blocks, main/total ratio).

    Totals count every block in the tree including genesis; a pure path
    yields ratio 1.0, anything lower measures fork exposure.
    """
    total = len(tree.blocks)
    main = len(tree.main_branch()) if rule is None else len(tree.path_to(fork_choice(tree, rule)))
    return total, main, main / total
