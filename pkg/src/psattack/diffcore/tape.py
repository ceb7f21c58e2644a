"""Recording state and the per-computation op tape.

A Tape is created lazily by the first recorded op of a computation and is
shared by every node reachable from it; combining two live graphs (e.g.
summing two separately built losses) unifies their tapes, so gradients of a
sum of graphs are well defined. Tapes are plain objects, not global state:
distinct computations own distinct tapes and may live on distinct threads.
"""

import threading
from contextlib import contextmanager


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class NonFiniteError(ArithmeticError):
    """An op produced a non-finite value; message names the op."""


class TapeConsumedError(RuntimeError):
    """backward already ran over this tape without retain."""


_state = threading.local()


def recording_enabled() -> bool:
    return getattr(_state, "recording", True)


def _set_recording(flag: bool) -> bool:
    prev = recording_enabled()
    _state.recording = flag
    return prev


@contextmanager
def no_grad():
    """Disable op recording inside the block."""
    prev = _set_recording(False)
    try:
        yield
    finally:
        _set_recording(prev)


@contextmanager
def enable_grad():
    prev = _set_recording(True)
    try:
        yield
    finally:
        _set_recording(prev)


_debug = threading.local()


def debug_checks_enabled() -> bool:
    import os

    flag = getattr(_debug, "checks", None)
    if flag is None:
        flag = bool(os.environ.get("PSATTACK_DEBUG"))
        _debug.checks = flag
    return flag


def set_debug_checks(flag: bool) -> None:
    """Turn per-op finiteness checks and per-iterate feasibility asserts on/off."""
    _debug.checks = bool(flag)


def reset_node_watermark() -> None:
    _state.peak_nodes = 0


def node_watermark() -> int:
    """Largest single-tape node count seen since the last reset (per thread)."""
    return getattr(_state, "peak_nodes", 0)


def _note_tape_size(n: int) -> None:
    if n > getattr(_state, "peak_nodes", 0):
        _state.peak_nodes = n


class Tape:
    """Ordered record of the op nodes of one connected computation.

    Nodes are appended in execution order, so parents always precede
    children. ``consumed`` flips when a backward pass runs without retain;
    a second backward over a consumed tape is an error.
    """

    __slots__ = ("nodes", "consumed", "_up")

    def __init__(self):
        self.nodes = []
        self.consumed = False
        self._up = None  # union-find pointer set when merged into another tape

    def root(self) -> "Tape":
        t = self
        while t._up is not None:
            t = t._up
        if t is not self:
            self._up = t  # path compression
        return t

    def node_count(self) -> int:
        return len(self.root().nodes)

    def release(self) -> None:
        """Drop graph edges so node arrays free by refcount, not gc cycles."""
        r = self.root()
        for node in r.nodes:
            node.parents = ()
            node.vjp = None
        r.nodes.clear()


def merge_tapes(a: Tape, b: Tape) -> Tape:
    ra, rb = a.root(), b.root()
    if ra is rb:
        return ra
    if len(rb.nodes) > len(ra.nodes):
        ra, rb = rb, ra
    ra.consumed = ra.consumed or rb.consumed
    ra.nodes.extend(rb.nodes)
    rb.nodes = []
    rb._up = ra
    return ra
