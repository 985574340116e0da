"""Binary wire codec for gossip payloads.

Messages cross the network fabric as tagged, length-prefixed byte strings
so that fault injection can flip real bytes; any decode failure (or id /
signature mismatch after decode) is treated by receivers as a drop.
"""

from __future__ import annotations

from .core import Block, BlockHeader, Transaction, _field, _u64, _i64
from .execution import Receipt


class CodecError(Exception):
    pass


class Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CodecError("truncated message")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def field(self) -> bytes:
        n = int.from_bytes(self.take(4), "big")
        if n > len(self.data):
            raise CodecError("bad field length")
        return self.take(n)

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def i64(self) -> int:
        return int.from_bytes(self.take(8), "big", signed=True)

    def done(self) -> bool:
        return self.pos == len(self.data)


def encode_args(args) -> bytes:
    from .core import encode_args as _enc
    return _enc(args)


def decode_args(data: bytes) -> tuple:
    r = Reader(data)
    n = r.u64()
    if n > len(data):
        raise CodecError("bad arg count")
    out = []
    for _ in range(n):
        tag = r.take(1)
        if tag == b"b":
            out.append(r.field())
        elif tag == b"i":
            out.append(r.i64())
        elif tag == b"s":
            try:
                out.append(r.field().decode())
            except UnicodeDecodeError as e:
                raise CodecError("bad utf-8") from e
        else:
            raise CodecError(f"bad arg tag {tag!r}")
    if not r.done():
        raise CodecError("trailing bytes in args")
    return tuple(out)


def _str(r: Reader) -> str:
    try:
        return r.field().decode()
    except UnicodeDecodeError as e:
        raise CodecError("bad utf-8") from e


def encode_tx(tx: Transaction) -> bytes:
    return b"".join([
        _field(tx.id),
        _field(tx.sender.encode()),
        _field(tx.contract),
        _field(tx.function.encode()),
        _field(encode_args(tx.args)),
        _u64(tx.value),
        _u64(tx.nonce),
        _u64(tx.gas_limit),
        _field(tx.signature),
    ])


def decode_tx(data: bytes, r: Reader = None) -> Transaction:
    r = r or Reader(data)
    txid = r.field()
    sender = _str(r)
    contract = r.field()
    function = _str(r)
    args = decode_args(r.field())
    value = r.u64()
    nonce = r.u64()
    gas_limit = r.u64()
    sig = r.field()
    if len(txid) != 32 or len(sig) != 32:
        raise CodecError("bad digest length")
    return Transaction(txid, sender, contract, function, args, value, nonce, gas_limit, sig)


def encode_header(h: BlockHeader) -> bytes:
    return b"".join([
        _field(h.parent), _u64(h.height), _field(h.tx_root),
        _field(h.state_root), _u64(h.proposer), _u64(h.nonce), _u64(h.timestamp),
    ])


def decode_header(data: bytes, r: Reader = None) -> BlockHeader:
    r = r or Reader(data)
    parent = r.field()
    height = r.u64()
    tx_root = r.field()
    state_root = r.field()
    proposer = r.u64()
    nonce = r.u64()
    timestamp = r.u64()
    if len(parent) != 32 or len(tx_root) != 32 or len(state_root) != 32:
        raise CodecError("bad digest length")
    return BlockHeader(parent, height, tx_root, state_root, proposer, nonce, timestamp)


_RET_NONE, _RET_INT, _RET_STR, _RET_BYTES = b"n", b"i", b"s", b"b"


def encode_receipt(rc: Receipt) -> bytes:
    rv = rc.return_value
    if rv is None:
        tail = _RET_NONE
    elif isinstance(rv, bool):
        raise CodecError("bool return values are not encodable")
    elif isinstance(rv, int):
        tail = _RET_INT + _i64(rv)
    elif isinstance(rv, str):
        tail = _RET_STR + _field(rv.encode())
    elif isinstance(rv, bytes):
        tail = _RET_BYTES + _field(rv)
    else:
        raise CodecError(f"unencodable return value {type(rv).__name__}")
    return _field(rc.tx_id) + _field(rc.status.encode()) + _u64(rc.gas_used) + tail


def decode_receipt(r: Reader) -> Receipt:
    tx_id = r.field()
    status = _str(r)
    gas_used = r.u64()
    tag = r.take(1)
    if tag == _RET_NONE:
        rv = None
    elif tag == _RET_INT:
        rv = r.i64()
    elif tag == _RET_STR:
        rv = _str(r)
    elif tag == _RET_BYTES:
        rv = r.field()
    else:
        raise CodecError(f"bad return tag {tag!r}")
    return Receipt(tx_id, status, gas_used, rv)


def encode_block(b: Block) -> bytes:
    parts = [encode_header(b.header), _u64(len(b.transactions))]
    parts += [_field(encode_tx(tx)) for tx in b.transactions]
    parts.append(_u64(len(b.receipts)))
    parts += [_field(encode_receipt(rc)) for rc in b.receipts]
    return b"".join(parts)


def decode_block(data: bytes, r: Reader = None) -> Block:
    r = r or Reader(data)
    header = decode_header(None, r)
    ntx = r.u64()
    if ntx > len(r.data):
        raise CodecError("bad tx count")
    txs = tuple(decode_tx(r.field()) for _ in range(ntx))
    nrc = r.u64()
    if nrc > len(r.data):
        raise CodecError("bad receipt count")
    receipts = tuple(decode_receipt(Reader(r.field())) for _ in range(nrc))
    return Block(header, txs, receipts)
