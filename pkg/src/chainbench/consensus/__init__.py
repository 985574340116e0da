"""Pluggable consensus engines: PoW mining, PBFT replicas, PoA slots."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ConsensusConfig:
    kind: str = "pbft"                 # pow | pbft | poa
    n_nodes: int = 4
    # PoW
    difficulty: int = 1_000            # target = 2**256 // difficulty
    retarget: bool = False
    target_interval: int = 2_000       # ticks between blocks the retarget aims for
    retarget_window: int = 10
    attempts_per_tick: int = 10_000    # modeled hash rate per node
    modeled_mining: bool = True        # sample mining times instead of hashing
    # PoA
    step_duration: int = 1_000
    authorities: tuple = ()
    # batching (all kinds)
    batch_size: int = 500
    max_block_gas: int = 10**12
    # PBFT
    view_timeout: int = 3_000
    batch_interval: int = 250          # min ticks between leader proposals
    strict_quorum: bool = True         # progress quorum N-f (halts when crashes > f)
    inbox_limit: int = 4096
    fork_rule: str = "longest"

    def __post_init__(self):
        if self.kind not in ("pow", "pbft", "poa"):
            raise ValueError(f"unknown consensus kind {self.kind!r}")
        if self.kind == "pow" and self.difficulty < 1:
            raise ValueError("difficulty must be >= 1")
        if self.kind == "poa":
            if not self.authorities:
                self.authorities = tuple(range(self.n_nodes))
            if len(self.authorities) < 1:
                raise ValueError("PoA requires at least one authority")
            if self.step_duration < 1:
                raise ValueError("step_duration must be >= 1")
        if self.kind == "pbft" and self.n_nodes < 4:
            raise ValueError("PBFT needs at least 4 nodes")

    @property
    def f(self) -> int:
        return (self.n_nodes - 1) // 3

    @property
    def quorum(self) -> int:
        """Votes needed for prepare/commit progress."""
        if self.strict_quorum:
            return self.n_nodes - self.f
        return 2 * self.f + 1


from .pow import pow_try_mine, pow_verify, pow_retarget, ModeledMiner  # noqa: E402
from .poa import poa_slot, PoaEngine  # noqa: E402
from .pbft import PbftReplica, PbftMessage  # noqa: E402

__all__ = [
    "ConsensusConfig", "pow_try_mine", "pow_verify", "pow_retarget",
    "ModeledMiner", "poa_slot", "PoaEngine", "PbftReplica", "PbftMessage",
]
