"""Scenario files: schema validation, experiment orchestration, result files.

A scenario is declarative JSON naming the topology, consensus knobs, fault
policy, workload and run parameters. Time in scenario files is expressed in
seconds and converted to virtual-clock ticks (1 tick = 1 ms). Validation is
strict: any key the schema does not know is a configuration error.
"""

from __future__ import annotations

import copy
import csv
import json
from pathlib import Path

from .consensus import ConsensusConfig
from .driver import (MetricsRecord, NodeConnector, RunConfig, Summary,
                     compute_metrics, run_benchmark, union_fork_stats)
from .netsim import Fabric, FaultPolicy, Partition, save_trace
from .node import Node, NodeConfig
from .workloads import Workload, analytics_preload, analytics_q1, analytics_q2


class ScenarioError(ValueError):
    pass


_CONSENSUS_KEYS = {
    "kind", "difficulty", "block_interval_s", "retarget", "target_interval",
    "retarget_window", "attempts_per_tick", "modeled_mining", "step_duration",
    "authorities", "batch_size", "max_block_gas", "view_timeout",
    "batch_interval", "strict_quorum", "inbox_limit", "fork_rule",
}
_NODE_KEYS = {
    "store_variant", "confirmation_length", "admission_rate", "gossip_p",
    "sig_verify_cost", "state_read_cost", "state_write_cost",
}
_RUN_KEYS = {"clients", "threads_per_client", "rate", "duration_s",
             "poll_interval_ms", "blocking", "poll_node"}
_FAULT_KEYS = {"crashes", "partitions", "delay_ms", "corrupt_prob", "base_latency_ms"}
_CRASH_KEYS = {"node", "at_s"}
_PARTITION_KEYS = {"a", "b", "start_s", "duration_s"}
_WORKLOAD_KEYS = {"name", "params"}
_ANALYTICS_KEYS = {"accounts", "blocks", "txs_per_block", "i", "j", "account",
                   "initial_balance", "strategy"}
_TOP_KEYS = {"name", "seed", "nodes", "consensus", "node", "workload", "run",
             "faults", "analytics"}


def _check_keys(obj: dict, allowed: set, path: str) -> None:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path or 'scenario'} must be an object")
    for key in obj:
        if key not in allowed:
            raise ScenarioError(f"unknown key {path + key!r} in scenario")


def validate_scenario(raw: dict) -> None:
    _check_keys(raw, _TOP_KEYS, "")
    if "consensus" in raw:
        _check_keys(raw["consensus"], _CONSENSUS_KEYS, "consensus.")
    if "node" in raw:
        _check_keys(raw["node"], _NODE_KEYS, "node.")
    if "run" in raw:
        _check_keys(raw["run"], _RUN_KEYS, "run.")
    if "workload" in raw:
        _check_keys(raw["workload"], _WORKLOAD_KEYS, "workload.")
    if "analytics" in raw:
        _check_keys(raw["analytics"], _ANALYTICS_KEYS, "analytics.")
    faults = raw.get("faults", {})
    _check_keys(faults, _FAULT_KEYS, "faults.")
    for i, crash in enumerate(faults.get("crashes", [])):
        _check_keys(crash, _CRASH_KEYS, f"faults.crashes[{i}].")
    for i, part in enumerate(faults.get("partitions", [])):
        _check_keys(part, _PARTITION_KEYS, f"faults.partitions[{i}].")


def load_scenario(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"malformed scenario JSON: {e}") from e
    validate_scenario(raw)
    return raw


def _ticks(seconds: float) -> int:
    return int(round(seconds * 1000))


class Experiment:
    """A built scenario: fabric + nodes + run config, ready to execute."""

    def __init__(self, raw: dict, seed=None):
        validate_scenario(raw)
        self.raw = raw
        self.name = raw.get("name", "scenario")
        self.seed = raw.get("seed", 0) if seed is None else seed
        n = raw.get("nodes", 4)
        ccfg = dict(raw.get("consensus", {}))
        kind = ccfg.pop("kind", "pbft")
        interval_s = ccfg.pop("block_interval_s", None)
        if "authorities" in ccfg:
            ccfg["authorities"] = tuple(ccfg["authorities"])
        self.consensus = ConsensusConfig(kind=kind, n_nodes=n, **ccfg)
        if interval_s is not None:
            if kind != "pow":
                raise ScenarioError("block_interval_s only applies to pow")
            self.consensus.difficulty = max(1, _ticks(interval_s)
                                            * self.consensus.attempts_per_tick * n)

        faults = raw.get("faults", {})
        policy = FaultPolicy(
            crashes=[(c["node"], _ticks(c["at_s"])) for c in faults.get("crashes", [])],
            delay_range=tuple(faults.get("delay_ms", (0, 5))),
            corrupt_prob=faults.get("corrupt_prob", 0.0),
            partitions=[Partition(frozenset(p["a"]), frozenset(p["b"]),
                                  _ticks(p["start_s"]), _ticks(p["duration_s"]))
                        for p in faults.get("partitions", [])],
        )
        self.fabric = Fabric(seed=self.seed, policy=policy,
                             base_latency=faults.get("base_latency_ms", 1),
                             inbox_limit=self.consensus.inbox_limit)
        node_cfg = raw.get("node", {})
        self.nodes = [
            Node(NodeConfig(i, self.consensus,
                            store_variant=node_cfg.get("store_variant", "patricia"),
                            confirmation_length=node_cfg.get("confirmation_length", 5),
                            admission_rate=node_cfg.get("admission_rate"),
                            gossip_p=node_cfg.get("gossip_p", 1.0),
                            sig_verify_cost=node_cfg.get("sig_verify_cost", 0),
                            state_read_cost=node_cfg.get("state_read_cost", 0),
                            state_write_cost=node_cfg.get("state_write_cost", 0)),
                 self.fabric, seed=self.seed)
            for i in range(n)
        ]
        run = raw.get("run", {})
        self.run_cfg = RunConfig(
            clients=run.get("clients", 1),
            threads_per_client=run.get("threads_per_client", 1),
            rate=run.get("rate", 8.0),
            duration=_ticks(run.get("duration_s", 10)),
            poll_interval=run.get("poll_interval_ms", 100),
            blocking=run.get("blocking", False),
            seed=self.seed,
            poll_node=run.get("poll_node", 0),
        )
        wl = raw.get("workload", {"name": "donothing"})
        self.workload_name = wl.get("name", "donothing")
        self.workload_params = wl.get("params", {})
        self.analytics = raw.get("analytics")
        self.fork_series: list[tuple[int, int, int]] = []  # (tick, total, main)
        self._union: dict = {}       # block id -> (height, parent id)

    def start_nodes(self) -> None:
        for node in self.nodes:
            node.start()

    def _union_snapshot(self) -> tuple[int, int]:
        """(generated blocks, blocks on the best union chain), genesis excluded."""
        for node in self.nodes:
            for bid, blk in node.tree.blocks.items():
                if bid not in self._union:
                    self._union[bid] = (blk.header.height, blk.header.parent)
        best, best_h = None, -1
        for bid, (h, _) in self._union.items():
            if h > best_h or (h == best_h and bid < best):
                best, best_h = bid, h
        return len(self._union) - 1, best_h

    def sample_forks(self, interval: int = 1000) -> None:
        def sample(_tick):
            total, main = self._union_snapshot()
            self.fork_series.append((self.fabric.now, total, main))
            self.fabric.schedule(self.fabric.now + interval, sample)
        self.fabric.schedule(self.fabric.now + interval, sample)

    def run(self) -> tuple[dict, MetricsRecord]:
        self.start_nodes()
        self.sample_forks()
        if self.workload_name == "analytics" or self.analytics is not None:
            return self._run_analytics()
        workload = Workload(self.workload_name, self.workload_params)
        record = run_benchmark(self.fabric, self.nodes, self.run_cfg, workload)
        summary = compute_metrics(record).as_dict()
        summary["scenario"] = self.name
        summary["seed"] = self.seed
        return summary, record

    def _run_analytics(self) -> tuple[dict, MetricsRecord]:
        a = dict(self.analytics or {})
        accounts = a.get("accounts", 1024)
        blocks = a.get("blocks", 1000)
        per_block = a.get("txs_per_block", 3)
        admin = NodeConnector(self.nodes[0])
        contract, transfers = analytics_preload(
            self.fabric, self.nodes, admin, accounts=accounts, blocks=blocks,
            txs_per_block=per_block, seed=self.seed,
            initial_balance=a.get("initial_balance", 10_000))
        tip = len(self.nodes[0].tree.main_branch()) - 1
        i = a.get("i", 1)
        j = a.get("j", tip)
        account = a.get("account", "acct00000")
        q1_total, q1_rt = analytics_q1(admin, i, j)
        q2_scan, q2_scan_rt = analytics_q2(admin, contract, account, i, j, "scan")
        q2_ver, q2_ver_rt = analytics_q2(admin, contract, account, i, j, "versioned")
        record = MetricsRecord(start=0, duration=self.fabric.now)
        record.fork = union_fork_stats(self.nodes)
        summary = {
            "scenario": self.name, "seed": self.seed,
            "preload_transfers": len(transfers), "range": [i, j],
            "q1_total_value": q1_total, "q1_roundtrips": q1_rt,
            "q2_account": account,
            "q2_scan": q2_scan, "q2_scan_roundtrips": q2_scan_rt,
            "q2_versioned": q2_ver, "q2_versioned_roundtrips": q2_ver_rt,
            "blocks_total": record.fork["blocks_total"],
            "blocks_main": record.fork["blocks_main"],
            "fork_ratio": record.fork["fork_ratio"],
        }
        return summary, record


def write_outputs(out_dir, summary: dict, record: MetricsRecord,
                  trace=None, fork_series=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    with open(out / "txs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tx_id", "submit_tick", "confirm_tick", "status"])
        for txid, submit_tick in record.submitted.items():
            confirm, status = record.final.get(txid, (None, "unconfirmed"))
            w.writerow([txid.hex(), submit_tick,
                        "" if confirm is None else confirm, status])
    with open(out / "queue.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "length"])
        for tick, length in record.queue_series:
            w.writerow([tick, length])
    with open(out / "blocks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["first_seen_tick", "height", "txs"])
        for tick, height, ntx in record.block_series:
            w.writerow([tick, height, ntx])
    if fork_series:
        with open(out / "forks.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tick", "blocks_total", "blocks_main", "delta"])
            for tick, total, main in fork_series:
                w.writerow([tick, total, main, total - main])
    if trace is not None:
        save_trace(trace, out / "trace.jsonl")


def run_scenario(raw: dict, out_dir=None, seed=None, wall_clock: bool = False,
                 keep_trace: bool = True) -> dict:
    exp = Experiment(raw, seed=seed)
    exp.fabric.keep_trace = keep_trace
    if wall_clock:
        exp.fabric.realtime_scale = 0.001
    summary, record = exp.run()
    if out_dir is not None:
        write_outputs(out_dir, summary, record,
                      trace=exp.fabric.trace if keep_trace else None,
                      fork_series=exp.fork_series)
    return summary


SWEEP_AXES = ("nodes", "clients", "rate", "batch_size", "difficulty")


def apply_axis(raw: dict, axis: str, value) -> dict:
    if axis not in SWEEP_AXES:
        raise ScenarioError(f"unknown sweep axis {axis!r}")
    out = copy.deepcopy(raw)
    if axis == "nodes":
        out["nodes"] = int(value)
    elif axis == "clients":
        out.setdefault("run", {})["clients"] = int(value)
    elif axis == "rate":
        out.setdefault("run", {})["rate"] = float(value)
    elif axis == "batch_size":
        out.setdefault("consensus", {})["batch_size"] = int(value)
    elif axis == "difficulty":
        out.setdefault("consensus", {})["difficulty"] = int(value)
    return out


def run_sweep(raw: dict, axis: str, values, out_dir=None, seed=None) -> list[dict]:
    summaries = []
    for value in values:
        sub = apply_axis(raw, axis, value)
        sub_out = Path(out_dir) / f"{axis}={value}" if out_dir is not None else None
        summary = run_scenario(sub, sub_out, seed=seed, keep_trace=False)
        summary[axis] = value
        summaries.append(summary)
    if out_dir is not None:
        keys = sorted({k for s in summaries for k in s})
        with open(Path(out_dir) / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([axis] + keys)
            for s in summaries:
                w.writerow([s[axis]] + [s.get(k, "") for k in keys])
    return summaries


def run_attack(raw: dict, out_dir=None, seed=None, start_s=None, duration_s=None) -> dict:
    """Partition the network and report fork exposure over time."""
    raw = copy.deepcopy(raw)
    faults = raw.setdefault("faults", {})
    parts = faults.setdefault("partitions", [])
    if not parts or start_s is not None or duration_s is not None:
        n = raw.get("nodes", 4)
        half = list(range(n // 2))
        rest = list(range(n // 2, n))
        parts.clear()
        parts.append({"a": half, "b": rest,
                      "start_s": 100 if start_s is None else start_s,
                      "duration_s": 150 if duration_s is None else duration_s})
    exp = Experiment(raw, seed=seed)
    summary, record = exp.run()
    part = exp.fabric.policy.partitions[0]
    heal = part.start + part.duration
    series = exp.fork_series
    def delta_at(tick):
        vals = [t - m for ts, t, m in series if ts <= tick]
        return vals[-1] if vals else 0
    final_total, final_main = (series[-1][1], series[-1][2]) if series else (0, 0)
    report = {
        "scenario": exp.name,
        "seed": exp.seed,
        "partition": {"start": part.start, "duration": part.duration},
        "delta_at_partition_start": delta_at(part.start),
        "delta_at_heal": delta_at(heal),
        "delta_final": final_total - final_main,
        "blocks_total": final_total,
        "blocks_main": final_main,
        "fork_ratio": (final_main / final_total) if final_total else 1.0,
        "summary": summary,
    }
    if out_dir is not None:
        write_outputs(out_dir, summary, record, trace=None, fork_series=series)
        (Path(out_dir) / "security.json").write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report
