"""Workload generators and analytics clients for the benchmark catalog.

Each generator is an independent, seeded transaction stream bound to one
worker; nonce spaces are partitioned per worker so ids never collide even
when two workers act for the same account. Setup (deploy + preload) runs
on the fabric before the measured window opens.
"""

from __future__ import annotations

import json
import random
from typing import Optional

from .contracts import account_name
from .core import Transaction, make_transaction
from .driver import NodeConnector


class WorkloadError(ValueError):
    pass


def await_txs(fabric, connector: NodeConnector, txids, poll: int = 200,
              max_wait: int = 2_000_000) -> None:
    """Advance the fabric until every tx id shows up in a confirmed block."""
    want = set(txids)
    found: set = set()
    h = 0
    deadline = fabric.now + max_wait
    while want - found:
        if fabric.now >= deadline:
            raise TimeoutError(f"{len(want - found)} txs unconfirmed after {max_wait} ticks")
        fabric.run_until(fabric.now + poll)
        for view in connector.get_latest_blocks(h):
            h = max(h, view.height)
            found.update(set(view.tx_ids) & want)


class TxStream:
    """Base generator: seeded RNG plus a private nonce space per worker."""

    gas_limit = 10_000_000

    def __init__(self, worker: int, contract: bytes, seed: int):
        self.worker = worker
        self.contract = contract
        self.rng = random.Random(seed)
        self._nonce = (worker + 1) << 32
        self.sender = f"client{worker:03d}"

    def _tx(self, function: str, args=(), value: int = 0,
            sender: Optional[str] = None) -> Transaction:
        self._nonce += 1
        return make_transaction(sender or self.sender, self.contract, function,
                                args, value=value, nonce=self._nonce,
                                gas_limit=self.gas_limit)

    def get_next_transaction(self) -> Optional[Transaction]:
        raise NotImplementedError


class YcsbStream(TxStream):
    def __init__(self, worker, contract, seed, record_count: int, read_ratio: float,
                 zipfian: bool = False, theta: float = 0.99):
        super().__init__(worker, contract, seed)
        self.record_count = record_count
        self.read_ratio = read_ratio
        self._cdf = None
        if zipfian:
            weights = [1.0 / (i + 1) ** theta for i in range(record_count)]
            total = sum(weights)
            acc, cdf = 0.0, []
            for w in weights:
                acc += w / total
                cdf.append(acc)
            self._cdf = cdf

    def _pick_key(self) -> str:
        if self._cdf is None:
            i = self.rng.randrange(self.record_count)
        else:
            import bisect
            i = bisect.bisect_left(self._cdf, self.rng.random())
        return f"user{i:06d}"

    def get_next_transaction(self):
        key = self._pick_key()
        if self.rng.random() < self.read_ratio:
            return self._tx("read", (key,))
        value = "v" + self.rng.getrandbits(64).to_bytes(8, "big").hex()
        return self._tx("write", (key, value))


class SmallbankStream(TxStream):
    PROCS = ("transact_savings", "deposit_checking", "send_payment", "write_check")

    def __init__(self, worker, contract, seed, account_count: int):
        super().__init__(worker, contract, seed)
        self.account_count = account_count

    def get_next_transaction(self):
        proc = self.PROCS[self.rng.randrange(4)]
        a = self.rng.randrange(self.account_count)
        amount = self.rng.randint(1, 10)
        if proc in ("send_payment", "write_check"):
            b = self.rng.randrange(self.account_count - 1)
            if b >= a:
                b += 1
            return self._tx(proc, (account_name(a), account_name(b), amount))
        return self._tx(proc, (account_name(a), amount))


class EtherIdStream(TxStream):
    def __init__(self, worker, contract, seed, account_count: int):
        super().__init__(worker, contract, seed)
        self.account_count = account_count
        self.domains: list[str] = []
        self._next_dom = 0

    def get_next_transaction(self):
        if not self.domains or self.rng.random() < 0.5:
            name = f"dom{self.worker}-{self._next_dom}"
            self._next_dom += 1
            self.domains.append(name)
            owner = account_name(self.rng.randrange(self.account_count))
            return self._tx("create", (name,), sender=owner)
        domain = self.domains[self.rng.randrange(len(self.domains))]
        buyer = account_name(self.rng.randrange(self.account_count))
        price = self.rng.randint(1, 5)
        return self._tx("buy", (domain, price), sender=buyer)


class DoublerStream(TxStream):
    def get_next_transaction(self):
        return self._tx("enter", (), value=self.rng.randint(1, 20))


class WavesStream(TxStream):
    def __init__(self, worker, contract, seed):
        super().__init__(worker, contract, seed)
        self.sales: list[str] = []
        self._next_sale = 0

    def get_next_transaction(self):
        roll = self.rng.random()
        if not self.sales or roll < 0.4:
            sid = f"sale{self.worker}-{self._next_sale}"
            self._next_sale += 1
            self.sales.append(sid)
            return self._tx("new_sale", (sid, self.rng.randint(1, 100)))
        sid = self.sales[self.rng.randrange(len(self.sales))]
        if roll < 0.7:
            return self._tx("transfer_sale", (sid, f"owner{self.rng.randrange(64)}"))
        return self._tx("query_sale", (sid,))


class VersionKvStream(TxStream):
    def __init__(self, worker, contract, seed, account_count: int):
        super().__init__(worker, contract, seed)
        self.account_count = account_count

    def get_next_transaction(self):
        a = self.rng.randrange(self.account_count)
        b = self.rng.randrange(self.account_count - 1)
        if b >= a:
            b += 1
        amount = self.rng.randint(1, 10)
        return self._tx("send_value", (account_name(a), account_name(b), amount),
                        value=amount, sender=account_name(a))


class IoHeavyStream(TxStream):
    def __init__(self, worker, contract, seed, n: int):
        super().__init__(worker, contract, seed)
        self.n = n
        self.gas_limit = max(10_000_000, 30_000 * n)
        self._round = 0

    def get_next_transaction(self):
        op_seed = (self.worker << 16) + self._round // 2
        fn = "write_n" if self._round % 2 == 0 else "read_n"
        self._round += 1
        return self._tx(fn, (self.n, op_seed))


class CpuHeavyStream(TxStream):
    def __init__(self, worker, contract, seed, n: int):
        super().__init__(worker, contract, seed)
        self.gas_limit = max(10_000_000, 40_000 * n)

    def get_next_transaction(self):
        return self._tx("sort", ())


class DoNothingStream(TxStream):
    def get_next_transaction(self):
        return self._tx("ping", ())


_DEFAULTS = {
    "ycsb": {"record_count": 200, "read_ratio": 0.5, "zipfian": False, "theta": 0.99},
    "smallbank": {"account_count": 100, "initial_balance": 10_000},
    "etherid": {"account_count": 64, "initial_balance": 10_000},
    "doubler": {},
    "wavespresale": {},
    "versionkv": {"account_count": 64, "initial_balance": 10_000},
    "ioheavy": {"n": 100},
    "cpuheavy": {"n": 1_000},
    "donothing": {},
}


class Workload:
    """A named workload: contract to deploy, preload phase, per-worker streams."""

    def __init__(self, name: str, params: Optional[dict] = None):
        if name not in _DEFAULTS:
            raise WorkloadError(f"unknown workload {name!r}")
        self.name = name
        self.params = dict(_DEFAULTS[name])
        for key, value in (params or {}).items():
            if key not in self.params:
                raise WorkloadError(f"unknown parameter {key!r} for workload {name}")
            self.params[key] = value
        if name == "ycsb":
            if not (0.0 <= self.params["read_ratio"] <= 1.0):
                raise WorkloadError("read_ratio must be in [0, 1]")
            if self.params["record_count"] < 1:
                raise WorkloadError("record_count must be >= 1")
        if name in ("smallbank", "etherid", "versionkv") and self.params["account_count"] < 2:
            raise WorkloadError("account_count must be >= 2")

    @property
    def code_name(self) -> str:
        return "kvstore" if self.name == "ycsb" else self.name

    def init_args(self) -> tuple:
        p = self.params
        if self.name in ("smallbank", "etherid", "versionkv"):
            return (p["account_count"], p["initial_balance"])
        if self.name == "cpuheavy":
            return (p["n"],)
        return ()

    def setup(self, fabric, nodes, admin: NodeConnector) -> bytes:
        handle = admin.deploy(self.code_name, self.init_args(), sender="admin",
                              nonce=0, gas_limit=10**10)
        await_txs(fabric, admin, [handle.tx_id])
        if self.name == "ycsb":
            self._preload_ycsb(fabric, admin, handle.contract)
        return handle.contract

    def _preload_ycsb(self, fabric, admin: NodeConnector, contract: bytes) -> None:
        rng = random.Random(0xA11CE)
        ids = []
        for i in range(self.params["record_count"]):
            value = "v" + rng.getrandbits(64).to_bytes(8, "big").hex()
            tx = make_transaction("admin", contract, "write", (f"user{i:06d}", value),
                                  nonce=i + 1, gas_limit=10_000_000)
            result = admin.invoke(tx)
            if not isinstance(result, bytes):
                raise WorkloadError("preload transaction rejected")
            ids.append(tx.id)
        await_txs(fabric, admin, ids)

    def generator(self, worker: int, contract: bytes, seed: int) -> TxStream:
        p = self.params
        if self.name == "ycsb":
            return YcsbStream(worker, contract, seed, p["record_count"],
                              p["read_ratio"], p["zipfian"], p["theta"])
        if self.name == "smallbank":
            return SmallbankStream(worker, contract, seed, p["account_count"])
        if self.name == "etherid":
            return EtherIdStream(worker, contract, seed, p["account_count"])
        if self.name == "doubler":
            return DoublerStream(worker, contract, seed)
        if self.name == "wavespresale":
            return WavesStream(worker, contract, seed)
        if self.name == "versionkv":
            return VersionKvStream(worker, contract, seed, p["account_count"])
        if self.name == "ioheavy":
            return IoHeavyStream(worker, contract, seed, p["n"])
        if self.name == "cpuheavy":
            return CpuHeavyStream(worker, contract, seed, p["n"])
        return DoNothingStream(worker, contract, seed)


def workload_names() -> list[str]:
    return sorted(_DEFAULTS)


# ---------------------------------------------------------------- analytics

def analytics_preload(fabric, nodes, admin: NodeConnector, *, accounts: int = 1024,
                      blocks: int = 1000, txs_per_block: int = 3, seed: int = 0,
                      initial_balance: int = 10_000):
    """Populate a versioned ledger with seeded random transfers.

    Returns (contract, transfers) where transfers is the generator-side
    ledger [(sender, receiver, amount)] usable as a brute-force oracle.
    """
    handle = admin.deploy("versionkv", (accounts, initial_balance),
                          sender="admin", nonce=0, gas_limit=10**12)
    await_txs(fabric, admin, [handle.tx_id])
    rng = random.Random(seed ^ 0x5EED)
    balances = {account_name(i): initial_balance for i in range(accounts)}
    transfers = []
    ids = []
    nonce = 0
    total = blocks * txs_per_block
    while len(transfers) < total:
        a = rng.randrange(accounts)
        b = rng.randrange(accounts - 1)
        if b >= a:
            b += 1
        src, dst = account_name(a), account_name(b)
        amount = rng.randint(1, 10)
        if balances[src] < amount:
            continue
        balances[src] -= amount
        balances[dst] += amount
        nonce += 1
        tx = make_transaction(src, handle.contract, "send_value", (src, dst, amount),
                              value=amount, nonce=nonce, gas_limit=10_000_000)
        if not isinstance(admin.invoke(tx), bytes):
            raise WorkloadError("preload transaction rejected")
        transfers.append((src, dst, amount))
        ids.append(tx.id)
    await_txs(fabric, admin, ids, max_wait=30_000_000)
    return handle.contract, transfers


def analytics_q1(connector: NodeConnector, i: int, j: int):
    """Total transaction value in blocks i..j; one block fetch per height."""
    if i > j:
        raise ValueError("need i <= j")
    before = connector.roundtrips
    total = 0
    for h in range(i, j + 1):
        block = connector.get_block(height=h)
        if block is None:
            raise ValueError(f"height {h} above confirmed tip")
        total += sum(tx.value for tx in block.transactions)
    return total, connector.roundtrips - before


def analytics_q2(connector: NodeConnector, contract: bytes, account: str,
                 i: int, j: int, strategy: str = "scan"):
    """Largest transfer value involving an account in blocks i..j.

    `scan` fetches one block per height; `versioned` pushes the walk into the
    contract and costs a single roundtrip.
    """
    if strategy not in ("scan", "versioned"):
        raise ValueError(f"unknown strategy {strategy!r}")
    before = connector.roundtrips
    best = None
    if strategy == "scan":
        for h in range(i, j + 1):
            block = connector.get_block(height=h)
            if block is None:
                raise ValueError(f"height {h} above confirmed tip")
            for tx in block.transactions:
                if tx.function == "send_value" and account in (tx.args[0], tx.args[1]):
                    if best is None or tx.value > best:
                        best = tx.value
    else:
        raw = connector.query(contract, "account_block_range", (account, i, j + 1))
        for rec in json.loads(raw):
            if rec["value"] > 0 and (best is None or rec["value"] > best):
                best = rec["value"]
    return best, connector.roundtrips - before
