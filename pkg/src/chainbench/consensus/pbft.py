"""PBFT replica: pre-prepare / prepare / commit plus view change.

One consensus instance runs at a time (seq = chain height); the leader of
view v is replica v mod N. Progress needs `cfg.quorum` matching prepares and
then as many commits. With the strict quorum (N-f) the protocol stalls as
soon as more than f replicas crash, which is how the crash-tolerance
boundary experiments reproduce a halt without weakening the protocol.

Messages carry a simulated MAC over their full encoding; receivers drop
anything that fails to decode or verify, which is what makes byte-flip
corruption a tolerable fault. Replicas that fall behind (dropped traffic,
partitions) catch up through `decide` floods broadcast by committers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from ..core import Block, Hash256, ZERO32, _field, _u64, _i64
from .. import codec

PRE_PREPARE = "pre_prepare"
PREPARE = "prepare"
COMMIT = "commit"
VIEW_CHANGE = "view_change"
NEW_VIEW = "new_view"
DECIDE = "decide"
FETCH = "fetch"

_TYPE_TAGS = {
    PRE_PREPARE: b"P", PREPARE: b"R", COMMIT: b"C",
    VIEW_CHANGE: b"V", NEW_VIEW: b"N", DECIDE: b"D", FETCH: b"F",
}
_TAG_TYPES = {v: k for k, v in _TYPE_TAGS.items()}


def _mac_key(sender: int) -> bytes:
    return hashlib.sha256(b"replica-mac:" + _u64(sender)).digest()


@dataclass(frozen=True)
class PbftMessage:
    type: str
    view: int
    seq: int
    block_digest: Hash256
    sender: int
    committed_seq: int = 0
    prepared_view: int = -1
    block: Optional[Block] = None


def encode_pbft(msg: PbftMessage) -> bytes:
    body = b"".join([
        _TYPE_TAGS[msg.type],
        _u64(msg.view), _u64(msg.seq),
        _field(msg.block_digest),
        _u64(msg.sender),
        _u64(msg.committed_seq),
        _i64(msg.prepared_view),
        _field(codec.encode_block(msg.block) if msg.block is not None else b""),
    ])
    mac = hashlib.sha256(_mac_key(msg.sender) + body).digest()
    return body + _field(mac)


def decode_pbft(data: bytes) -> PbftMessage:
    r = codec.Reader(data)
    tag = r.take(1)
    if tag not in _TAG_TYPES:
        raise codec.CodecError(f"bad pbft tag {tag!r}")
    view = r.u64()
    seq = r.u64()
    digest = r.field()
    sender = r.u64()
    committed_seq = r.u64()
    prepared_view = r.i64()
    block_bytes = r.field()
    body_end = r.pos
    mac = r.field()
    if not r.done():
        raise codec.CodecError("trailing bytes")
    expect = hashlib.sha256(_mac_key(sender) + data[:body_end]).digest()
    if mac != expect:
        raise codec.CodecError("bad mac")
    if len(digest) != 32:
        raise codec.CodecError("bad digest")
    block = codec.decode_block(block_bytes) if block_bytes else None
    return PbftMessage(_TAG_TYPES[tag], view, seq, digest, sender,
                       committed_seq, prepared_view, block)


class _Entry:
    __slots__ = ("block", "digest", "prepares", "commits", "sent_prepare", "sent_commit")

    def __init__(self):
        self.block = None
        self.digest = None
        self.prepares: dict[int, bool] = {}
        self.commits: dict[int, bool] = {}
        self.sent_prepare = False
        self.sent_commit = False


class PbftReplica:
    """Pure protocol state machine; block building/executing stays outside.

    Every handler returns ``(outbound, committed)`` where outbound entries
    are ``(destination | None for broadcast, PbftMessage)`` and committed
    lists blocks finalized by that step, in order.
    """

    def __init__(self, node_id: int, cfg, genesis_id: Hash256):
        self.id = node_id
        self.cfg = cfg
        self.n = cfg.n_nodes
        self.f = cfg.f
        self.view = 0
        self.target_view = 0
        self.committed: list[Block] = []
        self.last_block_id = genesis_id
        self.log: dict[tuple[int, int], _Entry] = {}
        self.prepared: Optional[tuple[int, int, Hash256, Block]] = None  # view, seq, digest, block
        self.in_flight: Optional[int] = None
        self.view_votes: dict[int, dict[int, tuple[int, int, Hash256, Optional[Block]]]] = {}
        self.future_ppre: dict[tuple[int, int], PbftMessage] = {}
        self.future_decides: dict[int, Block] = {}
        self.byzantine_evidence = 0
        self.last_propose_tick = -(10 ** 9)
        self._progress_marker = 0
        self._last_fetched = 0

    # -- helpers -------------------------------------------------------------

    @property
    def next_seq(self) -> int:
        return len(self.committed) + 1

    def leader_of(self, view: int) -> int:
        return view % self.n

    def is_leader(self) -> bool:
        return self.leader_of(self.view) == self.id

    def _msg(self, type_, view, seq, digest=ZERO32, block=None,
             committed_seq=None, prepared_view=-1) -> PbftMessage:
        return PbftMessage(type_, view, seq, digest, self.id,
                           committed_seq if committed_seq is not None else len(self.committed),
                           prepared_view, block)

    def _entry(self, view: int, seq: int) -> _Entry:
        key = (view, seq)
        if key not in self.log:
            self.log[key] = _Entry()
        return self.log[key]

    # -- proposing -------------------------------------------------------------

    def can_propose(self, now: int) -> bool:
        return (self.is_leader() and self.in_flight is None
                and self.view >= self.target_view
                and now - self.last_propose_tick >= self.cfg.batch_interval)

    def propose(self, block: Block, now: int):
        """Leader starts the next instance with a fully built block."""
        assert self.is_leader() and self.in_flight is None
        seq = self.next_seq
        self.in_flight = seq
        self.last_propose_tick = now
        entry = self._entry(self.view, seq)
        entry.block = block
        entry.digest = block.id
        entry.prepares[self.id] = True
        entry.sent_prepare = True
        out = [
            (None, self._msg(PRE_PREPARE, self.view, seq, block.id, block)),
            (None, self._msg(PREPARE, self.view, seq, block.id)),
        ]
        return out, []

    # -- message handling --------------------------------------------------------

    def on_message(self, msg: PbftMessage, now: int):
        handler = {
            PRE_PREPARE: self._on_pre_prepare,
            PREPARE: self._on_prepare,
            COMMIT: self._on_commit,
            VIEW_CHANGE: self._on_view_change,
            NEW_VIEW: self._on_new_view,
            DECIDE: self._on_decide,
            FETCH: self._on_fetch,
        }[msg.type]
        return handler(msg, now)

    def _on_pre_prepare(self, msg: PbftMessage, now: int):
        if msg.view > self.view:
            self.future_ppre[(msg.view, msg.seq)] = msg
            return [], []
        if msg.view < self.view or msg.sender != self.leader_of(msg.view):
            return [], []
        if msg.seq != self.next_seq:
            out = []
            if msg.seq > self.next_seq:
                # We missed a commit somewhere; pull it from the leader.
                self.future_ppre[(msg.view, msg.seq)] = msg
                if self._last_fetched < self.next_seq:
                    self._last_fetched = self.next_seq
                    out.append((msg.sender, self._msg(FETCH, msg.view, self.next_seq)))
            return out, []
        if msg.block is None or msg.block.id != msg.block_digest:
            return [], []
        if msg.block.header.parent != self.last_block_id:
            return [], []
        entry = self._entry(msg.view, msg.seq)
        if entry.digest is not None and entry.digest != msg.block_digest:
            self.byzantine_evidence += 1
            return [], []
        entry.block = msg.block
        entry.digest = msg.block_digest
        out = []
        if not entry.sent_prepare:
            entry.sent_prepare = True
            entry.prepares[self.id] = True
            out.append((None, self._msg(PREPARE, msg.view, msg.seq, msg.block_digest)))
        o2, committed = self._check_progress(msg.view, msg.seq)
        return out + o2, committed

    def _on_prepare(self, msg: PbftMessage, now: int):
        if msg.view != self.view or msg.seq != self.next_seq:
            return [], []
        entry = self._entry(msg.view, msg.seq)
        if entry.digest is not None and msg.block_digest != entry.digest:
            return [], []
        entry.prepares[msg.sender] = True
        return self._check_progress(msg.view, msg.seq)

    def _on_commit(self, msg: PbftMessage, now: int):
        if msg.view != self.view or msg.seq != self.next_seq:
            return [], []
        entry = self._entry(msg.view, msg.seq)
        if entry.digest is not None and msg.block_digest != entry.digest:
            return [], []
        entry.commits[msg.sender] = True
        return self._check_progress(msg.view, msg.seq)

    def _check_progress(self, view: int, seq: int):
        entry = self._entry(view, seq)
        out = []
        if entry.block is None:
            return out, []
        if not entry.sent_commit and len(entry.prepares) >= self.cfg.quorum:
            entry.sent_commit = True
            entry.commits[self.id] = True
            self.prepared = (view, seq, entry.digest, entry.block)
            out.append((None, self._msg(COMMIT, view, seq, entry.digest)))
        committed = []
        if entry.sent_commit and len(entry.commits) >= self.cfg.quorum and seq == self.next_seq:
            out2, committed = self._finalize(entry.block)
            out += out2
        return out, committed

    def _finalize(self, block: Block):
        committed = [block]
        out = []
        self.committed.append(block)
        self.last_block_id = block.id
        if self.prepared is not None and self.prepared[1] <= len(self.committed):
            self.prepared = None
        if self.in_flight is not None and self.in_flight <= len(self.committed):
            self.in_flight = None
        # Adopt any decides that arrived early, then retry buffered proposals.
        while self.next_seq in self.future_decides:
            nxt = self.future_decides.pop(self.next_seq)
            if nxt.header.parent != self.last_block_id:
                break
            self.committed.append(nxt)
            self.last_block_id = nxt.id
            committed.append(nxt)
        key = (self.view, self.next_seq)
        if key in self.future_ppre:
            o2, c2 = self._on_pre_prepare(self.future_ppre.pop(key), 0)
            out += o2
            committed += c2
        return out, committed

    def _on_decide(self, msg: PbftMessage, now: int):
        if msg.block is None or msg.block.id != msg.block_digest:
            return [], []
        if msg.view > self.view:
            # Authenticated evidence that the network moved on; adopt the view.
            self.view = msg.view
            self.target_view = max(self.target_view, msg.view)
        if msg.seq < self.next_seq:
            return [], []
        if msg.seq > self.next_seq:
            if len(self.future_decides) < 64:
                self.future_decides[msg.seq] = msg.block
            return [], []
        if msg.block.header.parent != self.last_block_id:
            return [], []
        return self._finalize(msg.block)

    def _on_fetch(self, msg: PbftMessage, now: int):
        if 1 <= msg.seq <= len(self.committed):
            blk = self.committed[msg.seq - 1]
            return [(msg.sender, self._msg(DECIDE, self.view, msg.seq, blk.id, blk))], []
        return [], []

    # -- view change -----------------------------------------------------------

    def on_timeout(self, now: int, has_pending_work: bool):
        """Progress watchdog: vote to move to the next view when stuck."""
        out = []
        if len(self.committed) != self._progress_marker:
            self._progress_marker = len(self.committed)
            return out, []
        if not has_pending_work and self.in_flight is None and self.prepared is None:
            return out, []
        self.target_view = max(self.target_view, self.view) + 1
        out.append((None, self._vote(self.target_view)))
        self._record_own_vote(self.target_view)
        return out, []

    def _vote(self, target: int) -> PbftMessage:
        digest, pview, block = ZERO32, -1, None
        if self.prepared is not None:
            pview, _, digest, block = self.prepared[0], self.prepared[1], self.prepared[2], self.prepared[3]
        return self._msg(VIEW_CHANGE, target, len(self.committed), digest,
                         block, committed_seq=len(self.committed), prepared_view=pview)

    def _record_own_vote(self, target: int):
        votes = self.view_votes.setdefault(target, {})
        d, pv, blk = ZERO32, -1, None
        if self.prepared is not None:
            pv, d, blk = self.prepared[0], self.prepared[2], self.prepared[3]
        votes[self.id] = (len(self.committed), pv, d, blk)

    def _on_view_change(self, msg: PbftMessage, now: int):
        target = msg.view
        if target <= self.view:
            return [], []
        votes = self.view_votes.setdefault(target, {})
        votes[msg.sender] = (msg.committed_seq, msg.prepared_view, msg.block_digest, msg.block)
        out = []
        # Join any view change that f+1 peers already voted for.
        if target > self.target_view and len(votes) >= self.f + 1:
            self.target_view = target
            out.append((None, self._vote(target)))
            self._record_own_vote(target)
        if self.leader_of(target) == self.id and len(self.view_votes.get(target, {})) >= self.cfg.quorum:
            out += self._install(target)
        return out, []

    def _install(self, target: int):
        self.view = target
        self.target_view = max(self.target_view, target)
        self.in_flight = None
        self.last_propose_tick = -(10 ** 9)
        self._progress_marker = len(self.committed)
        out = [(None, self._msg(NEW_VIEW, target, len(self.committed)))]
        votes = self.view_votes.get(target, {})
        behind = [s for s, v in votes.items() if v[0] > len(self.committed)]
        if behind:
            best = max(behind, key=lambda s: votes[s][0])
            out.append((best, self._msg(FETCH, target, self.next_seq)))
            return out
        # Re-propose the highest-view prepared block reported for our next seq.
        candidates = [v for v in votes.values()
                      if v[0] == len(self.committed) and v[2] != ZERO32 and v[3] is not None]
        if self.prepared is not None and self.prepared[1] == self.next_seq:
            candidates.append((len(self.committed), self.prepared[0], self.prepared[2], self.prepared[3]))
        if candidates:
            _, _, digest, block = max(candidates, key=lambda v: (v[1], v[2]))
            if block.header.parent == self.last_block_id:
                o2, _ = self.propose(block, 0)
                out += o2
        for t in [t for t in self.view_votes if t <= target]:
            del self.view_votes[t]
        return out

    def _on_new_view(self, msg: PbftMessage, now: int):
        target = msg.view
        if target <= self.view or msg.sender != self.leader_of(target):
            return [], []
        self.view = target
        self.target_view = max(self.target_view, target)
        self._progress_marker = len(self.committed)
        out = []
        key = (target, self.next_seq)
        if key in self.future_ppre:
            o2, c2 = self._on_pre_prepare(self.future_ppre.pop(key), now)
            return o2, c2
        return out, []
