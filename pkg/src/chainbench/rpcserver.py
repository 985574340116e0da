"""Line-delimited JSON protocol over a local socket, for external drivers.

Requests are one JSON object per line: {"method": ..., "params": {...}, "id": n}
and answers mirror the id: {"result": ..., "id": n} or {"error": ..., "id": n}.
Hashes travel hex-encoded. Transactions are built and signed node-side from
their fields, matching the simulated signing scheme used in-process.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading

from .core import make_transaction
from .execution import ContractError
from .node import Node, REJECTED_BUSY


def handle_request(node: Node, request: dict) -> dict:
    rid = request.get("id")
    try:
        method = request["method"]
        params = request.get("params", {})
        if method == "deploy":
            handle = node.rpc_deploy(params["code_name"], tuple(params.get("init_args", ())),
                                     sender=params.get("sender", "deployer"),
                                     nonce=params.get("nonce", 0))
            result = {"contract": handle.contract.hex(), "tx_id": handle.tx_id.hex()}
        elif method == "invoke":
            tx = make_transaction(params["sender"], bytes.fromhex(params["contract"]),
                                  params["function"], tuple(params.get("args", ())),
                                  value=params.get("value", 0),
                                  nonce=params.get("nonce", 0),
                                  gas_limit=params.get("gas_limit", 10_000_000))
            out = node.rpc_invoke(tx)
            result = REJECTED_BUSY if out == REJECTED_BUSY else out.hex()
        elif method == "query":
            value = node.rpc_query(bytes.fromhex(params["contract"]),
                                   params["function"], tuple(params.get("args", ())))
            result = value.hex() if isinstance(value, bytes) else value
        elif method == "get_latest_blocks":
            result = [{"height": v.height, "block_id": v.block_id.hex(),
                       "tx_ids": [t.hex() for t in v.tx_ids],
                       "state_root": v.state_root.hex()}
                      for v in node.rpc_get_latest_blocks(params.get("h", 0))]
        elif method == "get_block":
            bid = params.get("block_id")
            blk = node.rpc_get_block(height=params.get("height"),
                                     block_id=bytes.fromhex(bid) if bid else None)
            if blk is None:
                result = None
            else:
                result = {"id": blk.id.hex(), "height": blk.height,
                          "parent": blk.header.parent.hex(),
                          "state_root": blk.header.state_root.hex(),
                          "tx_ids": [t.id.hex() for t in blk.transactions]}
        elif method == "get_balance_at":
            result = node.rpc_get_balance_at(bytes.fromhex(params["contract"]),
                                             params["account"], params["height"])
        else:
            return {"error": f"unknown method {method!r}", "id": rid}
        return {"result": result, "id": rid}
    except (KeyError, ValueError, ContractError) as e:
        return {"error": str(e), "id": rid}


def handle_line(node: Node, line: str) -> str:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as e:
        return json.dumps({"error": f"bad json: {e}", "id": None}, sort_keys=True)
    return json.dumps(handle_request(node, request), sort_keys=True)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode().strip()
            if not line:
                continue
            self.wfile.write((handle_line(self.server.node, line) + "\n").encode())
            self.wfile.flush()


class RpcServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, node: Node, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.node = node

    def serve_in_background(self) -> tuple[str, int]:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return self.server_address
