"""Deterministic, gas-metered contract runtime.

Contracts are native catalog functions (see :mod:`chainbench.contracts`)
running against a journaled view of the state store. Gas is charged before
each operation; running out of gas or hitting a logic error discards the
journal, so a failed transaction leaves the state root untouched.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from .core import Hash256, Transaction, _field, _u64
from .statestore import StateKey, StateStore

CODE_KEY = b"__code__"

STATUS_OK = "ok"
STATUS_OUT_OF_GAS = "reverted_out_of_gas"
STATUS_LOGIC = "reverted_logic"


@dataclass(frozen=True)
class GasSchedule:
    base_tx: int = 21_000
    per_state_read: int = 200
    per_state_write: int = 5_000
    per_byte_written: int = 8
    per_compute_step: int = 1


DEFAULT_SCHEDULE = GasSchedule()


class OutOfGas(Exception):
    pass


class ContractError(Exception):
    """Logic failure inside a contract; reverts the transaction."""


class UnknownContractError(ValueError):
    pass


@dataclass(frozen=True)
class Receipt:
    tx_id: Hash256
    status: str
    gas_used: int
    return_value: Optional[object] = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def contract_id(deployer: str, nonce: int) -> Hash256:
    return hashlib.sha256(_field(deployer.encode()) + _u64(nonce)).digest()


_DELETED = object()


class ExecutionContext:
    """Journaled, gas-charged access to one contract's namespace.

    Reads hit the journal first, then the underlying store; writes stay in
    the journal until the whole transaction succeeds. ``msg.sender`` and
    ``msg.value`` style fields come from the enclosing transaction.
    """

    def __init__(self, store: StateStore, namespace: bytes, schedule: GasSchedule,
                 gas_limit: int, sender: str = "", value: int = 0, block_height: int = 0):
        self._store = store
        self._ns = namespace
        self._schedule = schedule
        self._gas_limit = gas_limit
        self._gas_used = 0
        self._journal: dict[bytes, object] = {}
        self.sender = sender
        self.value = value
        self.block_height = block_height

    # -- gas ---------------------------------------------------------------

    @property
    def gas_used(self) -> int:
        return self._gas_used

    @property
    def gas_remaining(self) -> int:
        return self._gas_limit - self._gas_used

    def charge(self, amount: int) -> None:
        if self._gas_used + amount > self._gas_limit:
            raise OutOfGas()
        self._gas_used += amount

    def charge_compute(self, steps: int) -> None:
        self.charge(steps * self._schedule.per_compute_step)

    # -- state -------------------------------------------------------------

    @staticmethod
    def as_bytes(key) -> bytes:
        return key.encode() if isinstance(key, str) else bytes(key)

    _k = as_bytes

    def get(self, key) -> Optional[bytes]:
        self.charge(self._schedule.per_state_read)
        k = self._k(key)
        if k in self._journal:
            v = self._journal[k]
            return None if v is _DELETED else v
        return self._store.get(StateKey(self._ns, k))

    def put(self, key, value: bytes) -> None:
        value = bytes(value)
        self.charge(self._schedule.per_state_write + len(value) * self._schedule.per_byte_written)
        self._journal[self._k(key)] = value

    def delete(self, key) -> None:
        self.charge(self._schedule.per_state_write)
        self._journal[self._k(key)] = _DELETED

    def get_int(self, key, default: Optional[int] = None) -> Optional[int]:
        raw = self.get(key)
        if raw is None:
            return default
        return int(raw)

    def put_int(self, key, value: int) -> None:
        self.put(key, str(int(value)).encode())

    def scan(self, prefix) -> list[tuple[bytes, bytes]]:
        """All live (key, value) pairs under a key prefix, sorted by key."""
        p = self._k(prefix)
        merged = {}
        for sk in self._store.keys(self._ns):
            if sk.key.startswith(p):
                merged[sk.key] = self._store.live[sk].value
        for k, v in self._journal.items():
            if k.startswith(p):
                if v is _DELETED:
                    merged.pop(k, None)
                else:
                    merged[k] = v
        out = sorted(merged.items())
        self.charge(self._schedule.per_state_read * max(1, len(out)))
        return out

    # -- commit ------------------------------------------------------------

    def apply_to_store(self, height: int) -> None:
        for k, v in self._journal.items():
            sk = StateKey(self._ns, k)
            if v is _DELETED:
                self._store.delete(sk, height)
            else:
                self._store.put(sk, v, height)


def deploy_contract(store: StateStore, code_name: str, init_args=(), *,
                    deployer: str = "deployer", nonce: int = 0, height: int = 0,
                    schedule: GasSchedule = DEFAULT_SCHEDULE) -> Hash256:
    """Register a catalog contract and run its init routine directly."""
    from . import contracts

    if code_name not in contracts.CATALOG:
        raise UnknownContractError(f"unknown contract {code_name!r}")
    cid = contract_id(deployer, nonce)
    if store.get(StateKey(cid, CODE_KEY)) is not None:
        raise UnknownContractError("contract id already deployed")
    ctx = ExecutionContext(store, cid, schedule, gas_limit=1 << 62,
                           sender=deployer, block_height=height)
    ctx.put(CODE_KEY, code_name.encode())
    contracts.CATALOG[code_name].init(ctx, tuple(init_args))
    ctx.apply_to_store(height)
    return cid


def execute_tx(store: StateStore, tx: Transaction, schedule: GasSchedule,
               height: int) -> Receipt:
    """Run one transaction; on any failure no state mutation persists."""
    from . import contracts

    ctx = ExecutionContext(store, tx.contract, schedule, tx.gas_limit,
                           sender=tx.sender, value=tx.value, block_height=height)
    try:
        ctx.charge(schedule.base_tx)
        if tx.function == "__deploy__":
            ret = _run_deploy(ctx, tx)
        else:
            code = ctx.get(CODE_KEY)
            if code is None:
                raise ContractError("unknown contract")
            ret = contracts.CATALOG[code.decode()].call(ctx, tx.function, tx.args)
    except OutOfGas:
        return Receipt(tx.id, STATUS_OUT_OF_GAS, tx.gas_limit)
    except ContractError:
        return Receipt(tx.id, STATUS_LOGIC, ctx.gas_used)
    ctx.apply_to_store(height)
    return Receipt(tx.id, STATUS_OK, ctx.gas_used, ret)


def _run_deploy(ctx: ExecutionContext, tx: Transaction):
    from . import contracts

    if not tx.args or not isinstance(tx.args[0], str):
        raise ContractError("deploy needs a code name")
    code_name = tx.args[0]
    if code_name not in contracts.CATALOG:
        raise ContractError(f"unknown contract {code_name!r}")
    if tx.contract != contract_id(tx.sender, tx.nonce):
        raise ContractError("contract id does not match (deployer, nonce)")
    if ctx.get(CODE_KEY) is not None:
        raise ContractError("contract id already deployed")
    ctx.put(CODE_KEY, code_name.encode())
    contracts.CATALOG[code_name].init(ctx, tuple(tx.args[1:]))
    return code_name
