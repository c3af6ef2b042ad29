"""Recorded message traffic of a simulated run."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

#: label of the federated server, which holds no data
SERVER = 0


@dataclass(frozen=True)
class Message:
    round: int
    sender: int
    receivers: tuple
    kind: str
    payload: np.ndarray
    encrypted: bool = False
    em_iter: int | None = None
    tag: str | None = None

    def to_json(self):
        rec = {
            "round": self.round,
            "from": self.sender,
            "to": list(self.receivers),
            "kind": self.kind,
            "encrypted": self.encrypted,
            "payload": np.asarray(self.payload).ravel().tolist(),
        }
        if self.em_iter is not None:
            rec["em_iter"] = self.em_iter
        if self.tag is not None:
            rec["tag"] = self.tag
        return json.dumps(rec)


@dataclass
class _Block:
    kind: str
    rounds: np.ndarray
    senders: np.ndarray
    receivers: list
    payloads: np.ndarray
    encrypted: bool
    em_iter: int | None
    tag: str | None


class Transcript:
    """Ordered message log.

    Messages are stored in blocks that share a kind, so recording thousands
    of PDMM rounds does not create one Python object per message. Iterating
    yields :class:`Message` objects in recording order.
    """

    def __init__(self):
        self._blocks = []

    def __len__(self):
        return sum(len(b.senders) for b in self._blocks)

    def __iter__(self):
        for b in self._blocks:
            for k in range(len(b.senders)):
                yield Message(int(b.rounds[k]), int(b.senders[k]), b.receivers[k], b.kind,
                              b.payloads[k], b.encrypted, b.em_iter, b.tag)

    def record(self, kind, round, senders, receivers, payloads, encrypted=False,
               em_iter=None, tag=None):
        """Append one block of messages; ``round`` may be a scalar or per-message."""
        senders = np.asarray(senders, dtype=int).reshape(-1)
        payloads = np.asarray(payloads, dtype=float)
        payloads = payloads.reshape(len(senders), -1) if payloads.size else payloads.reshape(len(senders), 0)
        rounds = np.broadcast_to(np.asarray(round, dtype=int), senders.shape)
        if len(receivers) != len(senders):
            raise ValueError("one receiver tuple per sender is required")
        self._blocks.append(_Block(kind, rounds.copy(), senders, [tuple(r) for r in receivers],
                                   payloads.copy(), bool(encrypted), em_iter, tag))

    def send(self, kind, round, sender, receivers, payload, encrypted=False, em_iter=None, tag=None):
        """Append a single message."""
        self.record(kind, round, [sender], [tuple(receivers)], np.reshape(payload, (1, -1)),
                    encrypted, em_iter, tag)

    def absorb(self, other, em_iter):
        """Append all of ``other``'s blocks, tagged with an EM iteration."""
        for b in other._blocks:
            self._blocks.append(_Block(b.kind, b.rounds, b.senders, b.receivers, b.payloads,
                                       b.encrypted, em_iter, b.tag))

    def indexed_blocks(self):
        """Yield ``(offset, block)``: ``offset`` is the block's first message index."""
        offset = 0
        for b in self._blocks:
            yield offset, b
            offset += len(b.senders)

    def blocks(self, kind=None):
        return [b for b in self._blocks if kind is None or b.kind == kind]

    def messages(self, kind=None, encrypted=None, em_iter=None):
        return [msg for msg in self
                if (kind is None or msg.kind == kind)
                and (encrypted is None or msg.encrypted == encrypted)
                and (em_iter is None or msg.em_iter == em_iter)]

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for msg in self:
                fh.write(msg.to_json())
                fh.write("\n")
