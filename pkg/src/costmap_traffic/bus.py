"""In-process publish/subscribe data space.

Topics live in a :class:`Domain`. Names follow ``/namespace/base`` and a
subscription may use the single-level wildcard ``/*/base``. Topics with
``LAST_VALUE`` durability retain their newest sample and hand it to late
subscribers.

A domain created with ``deferred=True`` stages published samples until
:meth:`Domain.deliver` is called; the simulation driver calls it once at the
start of every step, which gives every topic a uniform one-step latency.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class TopicNameError(ValueError):
    """Malformed topic name or subscription pattern."""


class PayloadTypeError(TypeError):
    """Payload type differs from the type the topic was established with."""


class Durability(Enum):
    VOLATILE = "volatile"
    LAST_VALUE = "last-value"


def _check_segment(segment: str, what: str) -> None:
    if not segment or "/" in segment:
        raise TopicNameError(f"invalid {what} {segment!r}")


def resolve_name(namespace: str, base: str) -> str:
    """Render ``namespace`` + ``base`` as a canonical topic name."""
    _check_segment(base, "topic base")
    if namespace:
        namespace = namespace.strip("/")
        _check_segment(namespace, "namespace")
        return f"/{namespace}/{base}"
    return f"/{base}"


def _split(name: str) -> list[str]:
    if not name.startswith("/"):
        raise TopicNameError(f"topic name must start with '/': {name!r}")
    parts = name[1:].split("/")
    if len(parts) not in (1, 2) or any(p == "" for p in parts):
        raise TopicNameError(f"malformed topic name {name!r}")
    return parts


@dataclass(frozen=True)
class Pattern:
    """Exact topic name or ``/*/base`` wildcard."""

    text: str
    wildcard_base: str | None = None

    @classmethod
    def parse(cls, text: str) -> "Pattern":
        parts = _split(text)
        if "*" in text:
            if len(parts) != 2 or parts[0] != "*" or "*" in parts[1]:
                raise TopicNameError(f"unsupported wildcard pattern {text!r}")
            return cls(text, wildcard_base=parts[1])
        return cls(text)

    def matches(self, topic: str) -> bool:
        if self.wildcard_base is None:
            return topic == self.text
        parts = topic[1:].split("/")
        return len(parts) == 2 and parts[1] == self.wildcard_base


@dataclass(frozen=True)
class Sample:
    topic: str
    payload: Any
    source: str
    sequence: int
    # global publish order within the domain
    stamp: int


@dataclass
class _Topic:
    name: str
    durability: Durability
    payload_type: type | None = None
    latest: Sample | None = None


@dataclass(eq=False)
class Subscription:
    pattern: Pattern
    domain: "Domain"
    _queue: deque = field(default_factory=deque, repr=False)

    def take(self, max_count: int | None = None) -> list[Sample]:
        """Remove and return up to ``max_count`` pending samples in arrival order."""
        with self.domain._lock:
            n = len(self._queue) if max_count is None else min(max_count, len(self._queue))
            return [self._queue.popleft() for _ in range(n)]

    def pending(self) -> int:
        return len(self._queue)

    def close(self) -> None:
        self.domain._unsubscribe(self)


class Domain:
    """A set of topics shared by all participants holding a reference to it."""

    def __init__(self, domain_id: int = 0, deferred: bool = False):
        if domain_id < 0:
            raise ValueError("domain_id must be non-negative")
        self.domain_id = domain_id
        self.deferred = deferred
        self.topics: dict[str, _Topic] = {}
        self._subs: list[Subscription] = []
        self._staged: list[Sample] = []
        self._seq: dict[tuple[str, str], int] = {}
        self._stamp = 0
        self._lock = threading.RLock()

    def create_topic(self, name: str, durability: Durability = Durability.VOLATILE,
                     payload_type: type | None = None) -> None:
        _split(name)
        if "*" in name:
            raise TopicNameError(f"wildcard not allowed in topic name {name!r}")
        with self._lock:
            topic = self.topics.get(name)
            if topic is None:
                self.topics[name] = _Topic(name, durability, payload_type)
            elif topic.durability is not durability:
                raise ValueError(f"topic {name} already exists as {topic.durability.value}")

    def publish(self, topic: str, payload: Any, source: str = "") -> Sample:
        with self._lock:
            if topic not in self.topics:
                self.create_topic(topic)
            t = self.topics[topic]
            if t.payload_type is None:
                t.payload_type = type(payload)
            elif not isinstance(payload, t.payload_type):
                raise PayloadTypeError(
                    f"{topic} carries {t.payload_type.__name__}, got {type(payload).__name__}")
            key = (source, topic)
            seq = self._seq.get(key, 0)
            self._seq[key] = seq + 1
            sample = Sample(topic, payload, source, seq, self._stamp)
            self._stamp += 1
            self._staged.append(sample)
            if not self.deferred:
                self._flush()
            return sample

    def deliver(self) -> int:
        """Make every staged sample takeable; returns how many were delivered."""
        with self._lock:
            return self._flush()

    def _flush(self) -> int:
        staged, self._staged = self._staged, []
        for sample in staged:
            topic = self.topics[sample.topic]
            if topic.durability is Durability.LAST_VALUE:
                topic.latest = sample
            for sub in self._subs:
                if sub.pattern.matches(sample.topic):
                    sub._queue.append(sample)
        return len(staged)

    def subscribe(self, pattern: str) -> Subscription:
        pat = Pattern.parse(pattern)
        with self._lock:
            sub = Subscription(pat, self)
            for name in sorted(self.topics):
                t = self.topics[name]
                if t.latest is not None and pat.matches(name):
                    sub._queue.append(t.latest)
            self._subs.append(sub)
            return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def latest(self, topic: str) -> Sample | None:
        t = self.topics.get(topic)
        return None if t is None else t.latest

    def publishers(self, topic: str) -> set[str]:
        return {src for (src, name) in self._seq if name == topic}
