"""Built-in contract catalog.

Nine contracts backing the benchmark workloads, written as native state
machines over the journaled execution context. Contract state is byte
strings; integers are stored as ASCII decimals and records as
sorted-key JSON so replicas produce identical bytes.
"""

from __future__ import annotations

import json
import random

from .execution import ContractError, ExecutionContext


def account_name(i: int) -> str:
    return f"acct{i:05d}"


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _need(args, n, what):
    if len(args) < n:
        raise ContractError(f"{what} expects {n} argument(s)")


class KvStore:
    """Plain key-value contract backing the YCSB workload."""

    name = "kvstore"

    @staticmethod
    def init(ctx, args):
        pass

    @staticmethod
    def call(ctx, function, args):
        if function == "write":
            _need(args, 2, "write")
            key, value = args[0], args[1]
            ctx.put(b"kv:" + ctx._k(key), ctx._k(value))
            return None
        if function == "read":
            _need(args, 1, "read")
            return ctx.get(b"kv:" + ctx._k(args[0]))
        if function == "scan":
            _need(args, 2, "scan")
            start, count = ctx._k(args[0]), int(args[1])
            rows = [(k, v) for k, v in ctx.scan(b"kv:") if k >= b"kv:" + start]
            return _json([[k[3:].decode("latin1"), v.decode("latin1")] for k, v in rows[:count]]).decode()
        raise ContractError(f"kvstore has no function {function!r}")


class Smallbank:
    """Bank accounts with checking/savings balances; four transfer procedures.

    Every procedure moves money between balances and never mints or burns,
    so the total across all accounts is invariant.
    """

    name = "smallbank"

    @staticmethod
    def init(ctx, args):
        _need(args, 2, "smallbank init")
        count, initial = int(args[0]), int(args[1])
        for i in range(count):
            a = account_name(i)
            ctx.put_int("checking:" + a, initial)
            ctx.put_int("savings:" + a, initial)

    @staticmethod
    def _bal(ctx, table, acct) -> int:
        v = ctx.get_int(table + ":" + acct)
        if v is None:
            raise ContractError(f"unknown account {acct!r}")
        return v

    @classmethod
    def call(cls, ctx, function, args):
        if function == "balance":
            _need(args, 1, "balance")
            a = args[0]
            return _json({"checking": cls._bal(ctx, "checking", a),
                          "savings": cls._bal(ctx, "savings", a)}).decode()
        if function == "transact_savings":
            _need(args, 2, "transact_savings")
            a, amt = args[0], int(args[1])
            cls._move(ctx, "checking:" + a, "savings:" + a, amt)
            return None
        if function == "deposit_checking":
            _need(args, 2, "deposit_checking")
            a, amt = args[0], int(args[1])
            cls._move(ctx, "savings:" + a, "checking:" + a, amt)
            return None
        if function == "send_payment":
            _need(args, 3, "send_payment")
            a, b, amt = args[0], args[1], int(args[2])
            cls._move(ctx, "checking:" + a, "checking:" + b, amt)
            return None
        if function == "write_check":
            _need(args, 3, "write_check")
            a, b, amt = args[0], args[1], int(args[2])
            cls._move(ctx, "savings:" + a, "checking:" + b, amt)
            return None
        raise ContractError(f"smallbank has no function {function!r}")

    @staticmethod
    def _move(ctx, src, dst, amt):
        if amt <= 0:
            raise ContractError("amount must be positive")
        sv, dv = ctx.get_int(src), ctx.get_int(dst)
        if sv is None or dv is None:
            raise ContractError("unknown account")
        if sv < amt:
            raise ContractError("insufficient funds")
        ctx.put_int(src, sv - amt)
        ctx.put_int(dst, dv + amt)


class EtherId:
    """Domain-name registrar with a separate account-balance namespace."""

    name = "etherid"

    @staticmethod
    def init(ctx, args):
        _need(args, 2, "etherid init")
        count, initial = int(args[0]), int(args[1])
        for i in range(count):
            ctx.put_int("bal:" + account_name(i), initial)

    @staticmethod
    def call(ctx, function, args):
        if function == "create":
            _need(args, 1, "create")
            domain = args[0]
            if ctx.get("dom:" + domain) is not None:
                raise ContractError("domain exists")
            ctx.put("dom:" + domain, _json({"owner": ctx.sender, "value": ""}))
            return None
        if function == "modify":
            _need(args, 2, "modify")
            domain, value = args[0], args[1]
            raw = ctx.get("dom:" + domain)
            if raw is None:
                raise ContractError("unknown domain")
            rec = json.loads(raw)
            if rec["owner"] != ctx.sender:
                raise ContractError("only the owner may modify")
            rec["value"] = value
            ctx.put("dom:" + domain, _json(rec))
            return None
        if function == "buy":
            _need(args, 2, "buy")
            domain, price = args[0], int(args[1])
            raw = ctx.get("dom:" + domain)
            if raw is None:
                raise ContractError("unknown domain")
            rec = json.loads(raw)
            buyer, owner = ctx.sender, rec["owner"]
            bb = ctx.get_int("bal:" + buyer)
            if bb is None or bb < price:
                raise ContractError("insufficient funds")
            ob = ctx.get_int("bal:" + owner, 0)
            ctx.put_int("bal:" + buyer, bb - price)
            ctx.put_int("bal:" + owner, ob + price)
            rec["owner"] = buyer
            ctx.put("dom:" + domain, _json(rec))
            return None
        if function == "owner_of":
            _need(args, 1, "owner_of")
            raw = ctx.get("dom:" + args[0])
            if raw is None:
                raise ContractError("unknown domain")
            return json.loads(raw)["owner"]
        if function == "balance":
            _need(args, 1, "balance")
            return ctx.get_int("bal:" + args[0], 0)
        raise ContractError(f"etherid has no function {function!r}")


class Doubler:
    """Pyramid scheme: entrants are paid double, in order, from later deposits."""

    name = "doubler"

    @staticmethod
    def init(ctx, args):
        ctx.put_int("balance", 0)
        ctx.put_int("payout_idx", 0)
        ctx.put_int("count", 0)

    @staticmethod
    def call(ctx, function, args):
        if function == "enter":
            if ctx.value <= 0:
                raise ContractError("entry requires a positive deposit")
            count = ctx.get_int("count", 0)
            ctx.put(f"p:{count}", _json({"addr": ctx.sender, "amount": ctx.value}))
            ctx.put_int("count", count + 1)
            balance = ctx.get_int("balance", 0) + ctx.value
            idx = ctx.get_int("payout_idx", 0)
            # Strict > guard: a participant is paid 2x their contribution as
            # soon as the pot strictly exceeds that payout.
            while idx < count + 1:
                entry = json.loads(ctx.get(f"p:{idx}"))
                payout = 2 * entry["amount"]
                if balance > payout:
                    ctx.put_int(f"paid:{idx}", payout)
                    balance -= payout
                    idx += 1
                else:
                    break
            ctx.put_int("balance", balance)
            ctx.put_int("payout_idx", idx)
            return None
        if function == "status":
            return _json({
                "balance": ctx.get_int("balance", 0),
                "payout_idx": ctx.get_int("payout_idx", 0),
                "count": ctx.get_int("count", 0),
            }).decode()
        raise ContractError(f"doubler has no function {function!r}")


class WavesPresale:
    """Token crowd-sale: running total plus a log of individual sales."""

    name = "wavespresale"

    @staticmethod
    def init(ctx, args):
        ctx.put_int("total", 0)

    @staticmethod
    def call(ctx, function, args):
        if function == "new_sale":
            _need(args, 2, "new_sale")
            sale_id, tokens = args[0], int(args[1])
            if ctx.get("sale:" + sale_id) is not None:
                raise ContractError("sale id exists")
            ctx.put("sale:" + sale_id, _json({"owner": ctx.sender, "tokens": tokens}))
            ctx.put_int("total", ctx.get_int("total", 0) + tokens)
            return None
        if function == "transfer_sale":
            _need(args, 2, "transfer_sale")
            sale_id, new_owner = args[0], args[1]
            raw = ctx.get("sale:" + sale_id)
            if raw is None:
                raise ContractError("unknown sale id")
            rec = json.loads(raw)
            rec["owner"] = new_owner
            ctx.put("sale:" + sale_id, _json(rec))
            return None
        if function == "query_sale":
            _need(args, 1, "query_sale")
            raw = ctx.get("sale:" + args[0])
            if raw is None:
                raise ContractError("unknown sale id")
            return raw.decode()
        if function == "total":
            return ctx.get_int("total", 0)
        raise ContractError(f"wavespresale has no function {function!r}")


class VersionKv:
    """Versioned account store for historical range queries.

    Each transfer writes an ``acct:<name>:v:<version>`` record carrying the
    post-transfer balance, the block height it committed at and the transfer
    amount, plus a per-block transaction list. Range queries walk versions
    backward from the latest, so one invocation answers what would otherwise
    take one block fetch per height.
    """

    name = "versionkv"

    @staticmethod
    def init(ctx, args):
        _need(args, 2, "versionkv init")
        count, initial = int(args[0]), int(args[1])
        for i in range(count):
            a = account_name(i)
            ctx.put_int("latest:" + a, 1)
            ctx.put("v:" + a + ":1", _json({
                "balance": initial, "commit_block": ctx.block_height, "value": 0}))

    @classmethod
    def call(cls, ctx, function, args):
        if function == "send_value":
            _need(args, 3, "send_value")
            src, dst, value = args[0], args[1], int(args[2])
            if value <= 0:
                raise ContractError("value must be positive")
            sbal = cls._latest_balance(ctx, src)
            dbal = cls._latest_balance(ctx, dst)
            if sbal < value:
                raise ContractError("insufficient balance")
            cls._append_version(ctx, src, sbal - value, value)
            cls._append_version(ctx, dst, dbal + value, value)
            block_key = f"block:{ctx.block_height}"
            raw = ctx.get(block_key)
            txs = json.loads(raw) if raw is not None else []
            txs.append({"from": src, "to": dst, "value": value})
            ctx.put(block_key, _json(txs))
            return None
        if function == "block_tx_list":
            _need(args, 1, "block_tx_list")
            raw = ctx.get(f"block:{int(args[0])}")
            return raw.decode() if raw is not None else "[]"
        if function == "account_block_range":
            _need(args, 3, "account_block_range")
            a, start, end = args[0], int(args[1]), int(args[2])
            version = ctx.get_int("latest:" + a)
            if version is None:
                raise ContractError("unknown account")
            out = []
            while version >= 1:
                rec = json.loads(ctx.get(f"v:{a}:{version}"))
                cb = rec["commit_block"]
                if start <= cb < end:
                    out.append(rec)
                elif cb < start:
                    break
                version -= 1
            return _json(out).decode()
        if function == "balance":
            _need(args, 1, "balance")
            return cls._latest_balance(ctx, args[0])
        raise ContractError(f"versionkv has no function {function!r}")

    @staticmethod
    def _latest_balance(ctx, acct) -> int:
        ver = ctx.get_int("latest:" + acct)
        if ver is None:
            raise ContractError(f"unknown account {acct!r}")
        return json.loads(ctx.get(f"v:{acct}:{ver}"))["balance"]

    @staticmethod
    def _append_version(ctx, acct, balance, value):
        ver = ctx.get_int("latest:" + acct) + 1
        ctx.put(f"v:{acct}:{ver}", _json({
            "balance": balance, "commit_block": ctx.block_height, "value": value}))
        ctx.put_int("latest:" + acct, ver)


class IoHeavy:
    """Bulk random reads/writes of 20-byte keys and 100-byte values."""

    name = "ioheavy"

    KEY_BYTES = 20
    VALUE_BYTES = 100

    @staticmethod
    def init(ctx, args):
        pass

    @classmethod
    def call(cls, ctx, function, args):
        if function not in ("write_n", "read_n"):
            raise ContractError(f"ioheavy has no function {function!r}")
        _need(args, 2, function)
        n, seed = int(args[0]), int(args[1])
        if n < 0:
            raise ContractError("n must be >= 0")
        rng = random.Random(seed)
        hits = 0
        for _ in range(n):
            key = rng.randbytes(cls.KEY_BYTES)
            value = rng.randbytes(cls.VALUE_BYTES)
            if function == "write_n":
                ctx.put(b"io:" + key, value)
            else:
                if ctx.get(b"io:" + key) is not None:
                    hits += 1
        return n if function == "write_n" else hits


class CpuHeavy:
    """In-contract quicksort over an array deployed in descending order."""

    name = "cpuheavy"

    @staticmethod
    def init(ctx, args):
        _need(args, 1, "cpuheavy init")
        n = int(args[0])
        ctx.put_int("n", n)
        for i in range(n):
            ctx.put_int(f"arr:{i}", n - i)

    @staticmethod
    def call(ctx, function, args):
        if function == "sort":
            n = ctx.get_int("n")
            arr = [ctx.get_int(f"arr:{i}") for i in range(n)]
            comparisons = _quicksort(arr, ctx)
            for i in range(n):
                ctx.put_int(f"arr:{i}", arr[i])
            return comparisons
        if function == "element":
            _need(args, 1, "element")
            return ctx.get_int(f"arr:{int(args[0])}")
        raise ContractError(f"cpuheavy has no function {function!r}")


def _quicksort(arr, ctx) -> int:
    """Iterative middle-pivot quicksort, charging gas per comparison."""
    comparisons = 0
    stack = [(0, len(arr) - 1)]
    while stack:
        lo, hi = stack.pop()
        if lo >= hi:
            continue
        pivot = arr[(lo + hi) // 2]
        i, j = lo, hi
        local = 0
        while i <= j:
            while arr[i] < pivot:
                local += 1
                i += 1
            local += 1
            while arr[j] > pivot:
                local += 1
                j -= 1
            local += 1
            if i <= j:
                arr[i], arr[j] = arr[j], arr[i]
                i += 1
                j -= 1
        ctx.charge_compute(local)
        comparisons += local
        stack.append((lo, j))
        stack.append((i, hi))
    return comparisons


class DoNothing:
    """Accepts a transaction and simply returns; isolates consensus cost."""

    name = "donothing"

    @staticmethod
    def init(ctx, args):
        pass

    @staticmethod
    def call(ctx, function, args):
        return None


CATALOG = {c.name: c for c in (
    KvStore, Smallbank, EtherId, Doubler, WavesPresale,
    VersionKv, IoHeavy, CpuHeavy, DoNothing,
)}
