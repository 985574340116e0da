"""chainbench: a desk-scale benchmarking framework for private blockchains.

The framework simulates the full stack in process: three consensus engines
(PoW, PBFT, PoA) over a virtual-clock network fabric with fault injection,
an account-based state store with Merkle commitments and version history, a
gas-metered contract runtime hosting the benchmark contract catalog, and an
asynchronous benchmark driver with throughput / latency / fork metrics.
"""

from .core import (
    Block, BlockHeader, BlockTree, AppendResult, ForkRule, Transaction,
    ZERO32, GENESIS_ID, fork_choice, fork_gap, hash_block, make_block,
    make_transaction, tx_merkle_root, verify_transaction,
)
from .statestore import StateKey, StateStore, VersionedEntry
from .execution import (
    ContractError, ExecutionContext, GasSchedule, OutOfGas, Receipt,
    contract_id, deploy_contract, execute_tx,
)
from .consensus import (
    ConsensusConfig, ModeledMiner, PbftReplica, PoaEngine, poa_slot,
    pow_retarget, pow_try_mine, pow_verify,
)
from .netsim import Fabric, FaultPolicy, Partition
from .node import Node, NodeConfig, REJECTED_BUSY
from .driver import (
    MetricsRecord, NodeConnector, RunConfig, Summary, compute_metrics,
    poll_confirmed, run_benchmark, run_blocking_probe, union_fork_stats,
)
from .workloads import Workload, analytics_preload, analytics_q1, analytics_q2
from .scenario import Experiment, run_attack, run_scenario, run_sweep

__version__ = "0.1.0"
