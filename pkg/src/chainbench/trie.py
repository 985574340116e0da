"""Hex-nibble radix trie with SHA-256 node commitments.

Three node kinds (leaf / extension / branch) over nibble paths, without any
RLP wire compatibility. Nodes are immutable and hashed at construction, so
update and delete copy only the spine; old roots stay valid as snapshots.
"""

from __future__ import annotations

import hashlib


ZERO32 = b"\x00" * 32


def _h(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _field(b: bytes) -> bytes:
    return len(b).to_bytes(4, "big") + b


def nibbles_of(key: bytes) -> tuple:
    out = []
    for byte in key:
        out.append(byte >> 4)
        out.append(byte & 0x0F)
    return tuple(out)


def _pack_nibbles(path: tuple) -> bytes:
    # One nibble per byte; only used inside node serialization, never stored.
    return bytes(path)


class Leaf:
    __slots__ = ("path", "vhash", "hash")

    def __init__(self, path: tuple, vhash: bytes):
        self.path = path
        self.vhash = vhash
        self.hash = _h(b"L" + _field(_pack_nibbles(path)) + _field(vhash))


class Extension:
    __slots__ = ("path", "child", "hash")

    def __init__(self, path: tuple, child):
        self.path = path
        self.child = child
        self.hash = _h(b"E" + _field(_pack_nibbles(path)) + _field(child.hash))


class Branch:
    __slots__ = ("children", "vhash", "hash")

    def __init__(self, children: tuple, vhash):
        self.children = children
        self.vhash = vhash
        parts = [b"B"]
        for c in children:
            parts.append(c.hash if c is not None else ZERO32)
        parts.append(vhash if vhash is not None else ZERO32)
        self.hash = _h(b"".join(parts))


def _common_prefix(a: tuple, b: tuple) -> int:
    n = min(len(a), len(b))
    i = 0
    while i < n and a[i] == b[i]:
        i += 1
    return i


def _branch_with(entries, vhash):
    children = [None] * 16
    for idx, node in entries:
        children[idx] = node
    return Branch(tuple(children), vhash)


def _descend(path: tuple, vhash: bytes):
    """Leaf for a remaining path that may be empty (empty -> value at branch)."""
    return Leaf(path, vhash)


def insert(node, path: tuple, vhash: bytes):
    if node is None:
        return Leaf(path, vhash)

    if isinstance(node, Leaf):
        if node.path == path:
            return Leaf(path, vhash)
        cp = _common_prefix(node.path, path)
        rest_old, rest_new = node.path[cp:], path[cp:]
        entries = []
        bval = None
        if rest_old:
            entries.append((rest_old[0], _descend(rest_old[1:], node.vhash)))
        else:
            bval = node.vhash
        if rest_new:
            entries.append((rest_new[0], _descend(rest_new[1:], vhash)))
        else:
            bval = vhash
        branch = _branch_with(entries, bval)
        return Extension(path[:cp], branch) if cp else branch

    if isinstance(node, Extension):
        cp = _common_prefix(node.path, path)
        if cp == len(node.path):
            return Extension(node.path, insert(node.child, path[cp:], vhash))
        # Split the extension at the divergence point.
        rest_ext, rest_new = node.path[cp:], path[cp:]
        sub = node.child if len(rest_ext) == 1 else Extension(rest_ext[1:], node.child)
        entries = [(rest_ext[0], sub)]
        bval = None
        if rest_new:
            entries.append((rest_new[0], _descend(rest_new[1:], vhash)))
        else:
            bval = vhash
        branch = _branch_with(entries, bval)
        return Extension(path[:cp], branch) if cp else branch

    # Branch
    if not path:
        return Branch(node.children, vhash)
    i = path[0]
    children = list(node.children)
    children[i] = insert(children[i], path[1:], vhash)
    return Branch(tuple(children), node.vhash)


def delete(node, path: tuple):
    """Remove path; returns the normalized replacement subtree (or None)."""
    if node is None:
        return None

    if isinstance(node, Leaf):
        return None if node.path == path else node

    if isinstance(node, Extension):
        n = len(node.path)
        if path[:n] != node.path:
            return node
        child = delete(node.child, path[n:])
        return _extend(node.path, child)

    if not path:
        if node.vhash is None:
            return node
        return _normalize_branch(node.children, None)
    i = path[0]
    if node.children[i] is None:
        return node
    children = list(node.children)
    children[i] = delete(children[i], path[1:])
    return _normalize_branch(tuple(children), node.vhash)


def _extend(prefix: tuple, child):
    """Prepend prefix nibbles to a normalized subtree."""
    if child is None:
        return None
    if isinstance(child, Leaf):
        return Leaf(prefix + child.path, child.vhash)
    if isinstance(child, Extension):
        return Extension(prefix + child.path, child.child)
    return Extension(prefix, child)


def _normalize_branch(children, vhash):
    present = [(i, c) for i, c in enumerate(children) if c is not None]
    count = len(present) + (1 if vhash is not None else 0)
    if count == 0:
        return None
    if count == 1:
        if vhash is not None:
            return Leaf((), vhash)
        i, c = present[0]
        return _extend((i,), c)
    return Branch(tuple(children), vhash)


def root_hash(node) -> bytes:
    return ZERO32 if node is None else node.hash
