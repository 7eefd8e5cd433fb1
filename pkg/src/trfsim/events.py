"""Timestamped tweet / retweet / follow events and their JSON Lines form.

The log is the lingua franca between the simulator and every analyzer, so the
serialization is strict: fixed field order, shortest round-trip floats, one
record per line.  Same-timestamp events are ordered tweet < retweet < follow,
then by acting user, so a log has a stable total order and identical inputs
produce byte-identical output.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, TextIO

from .errors import MalformedRecord, UnsortedInput
from .graph import TemporalDigraph

TWEET = "tweet"
RETWEET = "retweet"
FOLLOW = "follow"

_KIND_RANK = {TWEET: 0, RETWEET: 1, FOLLOW: 2}


@dataclass(frozen=True, slots=True)
class Event:
    """One timeline record.

    Kind-specific fields are None when not applicable:
      tweet   — author, msg
      retweet — repeater, msg, origin_author, origin_t
      follow  — follower, followee
    """

    t: float
    kind: str
    author: int | None = None
    msg: int | None = None
    repeater: int | None = None
    origin_author: int | None = None
    origin_t: float | None = None
    follower: int | None = None
    followee: int | None = None


def tweet(t: float, author: int, msg: int) -> Event:
    return Event(t=float(t), kind=TWEET, author=author, msg=msg)


def retweet(t: float, repeater: int, msg: int, origin_author: int, origin_t: float) -> Event:
    return Event(
        t=float(t), kind=RETWEET, repeater=repeater, msg=msg,
        origin_author=origin_author, origin_t=float(origin_t),
    )


def follow(t: float, follower: int, followee: int) -> Event:
    return Event(t=float(t), kind=FOLLOW, follower=follower, followee=followee)


def sort_key(e: Event) -> tuple:
    """Stable total order: time, then kind rank, then acting user, then target."""
    if e.kind == TWEET:
        return (e.t, 0, e.author, e.msg)
    if e.kind == RETWEET:
        return (e.t, 1, e.repeater, e.msg)
    return (e.t, 2, e.follower, e.followee)


def _require(cond: bool, why: str) -> None:
    if not cond:
        raise MalformedRecord(why)


def _check_id(value, name: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool) and value >= 0,
             f"{name} must be a non-negative integer, got {value!r}")
    return value


def _check_time(value, name: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{name} must be a number, got {value!r}")
    value = float(value)
    _require(math.isfinite(value) and value >= 0, f"{name} must be finite and non-negative")
    return value


def validate_event(e: Event) -> Event:
    _check_time(e.t, "t")
    if e.kind == TWEET:
        _check_id(e.author, "author")
        _check_id(e.msg, "msg")
    elif e.kind == RETWEET:
        _check_id(e.repeater, "repeater")
        _check_id(e.msg, "msg")
        _check_id(e.origin_author, "origin_author")
        _check_time(e.origin_t, "origin_t")
        _require(e.origin_t < e.t, f"retweet at t={e.t} must come after its tweet at {e.origin_t}")
    elif e.kind == FOLLOW:
        _check_id(e.follower, "follower")
        _check_id(e.followee, "followee")
        _require(e.follower != e.followee, "follower and followee must differ")
    else:
        raise MalformedRecord(f"unknown event kind {e.kind!r}")
    return e


def serialize_event(e: Event) -> str:
    """One JSON record; field order is fixed so logs are diffable."""
    if e.kind == TWEET:
        fields = {"t": e.t, "kind": e.kind, "author": e.author, "msg": e.msg}
    elif e.kind == RETWEET:
        fields = {
            "t": e.t, "kind": e.kind, "repeater": e.repeater, "msg": e.msg,
            "origin_author": e.origin_author, "origin_t": e.origin_t,
        }
    elif e.kind == FOLLOW:
        fields = {"t": e.t, "kind": e.kind, "follower": e.follower, "followee": e.followee}
    else:
        raise MalformedRecord(f"unknown event kind {e.kind!r}")
    return json.dumps(fields, separators=(",", ":"))


_FIELDS = {
    TWEET: ("t", "kind", "author", "msg"),
    RETWEET: ("t", "kind", "repeater", "msg", "origin_author", "origin_t"),
    FOLLOW: ("t", "kind", "follower", "followee"),
}


def parse_event_line(text: str) -> Event:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from exc
    _require(isinstance(obj, dict), "record must be a JSON object")
    kind = obj.get("kind")
    _require(kind in _FIELDS, f"unknown event kind {kind!r}")
    expected = set(_FIELDS[kind])
    _require(set(obj) == expected,
             f"{kind} record must have fields {sorted(expected)}, got {sorted(obj)}")
    t = _check_time(obj["t"], "t")
    if kind == TWEET:
        e = Event(t=t, kind=kind, author=obj["author"], msg=obj["msg"])
    elif kind == RETWEET:
        e = Event(
            t=t, kind=kind, repeater=obj["repeater"], msg=obj["msg"],
            origin_author=obj["origin_author"],
            origin_t=_check_time(obj["origin_t"], "origin_t"),
        )
    else:
        e = Event(t=t, kind=kind, follower=obj["follower"], followee=obj["followee"])
    return validate_event(e)


# -- whole-log helpers --------------------------------------------------------

def check_sorted(events: Sequence[Event]) -> None:
    prev = None
    for i, e in enumerate(events):
        key = sort_key(e)
        if prev is not None and key < prev:
            raise UnsortedInput(f"event {i} out of order")
        prev = key


def write_log(events: Sequence[Event], fp: TextIO | None = None) -> str | None:
    """Serialize a sorted log, one record per line.

    Returns the text when fp is None, otherwise writes to fp.
    """
    check_sorted(events)
    lines = []
    for e in events:
        line = serialize_event(validate_event(e)) + "\n"
        if fp is None:
            lines.append(line)
        else:
            fp.write(line)
    if fp is None:
        return "".join(lines)
    return None


def read_log(lines: Iterable[str], source: str = "<log>") -> list[Event]:
    events = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            events.append(parse_event_line(line))
        except MalformedRecord as exc:
            raise MalformedRecord(f"{source}:{lineno}: {exc}") from exc
    check_sorted(events)
    return events


def load_log(path: str) -> list[Event]:
    with open(path) as fp:
        return read_log(fp, source=path)


def save_log(events: Sequence[Event], path: str) -> None:
    with open(path, "w") as fp:
        write_log(events, fp)


def merge_logs(a: Sequence[Event], b: Sequence[Event]) -> list[Event]:
    """Stable sorted merge of two individually sorted logs."""
    check_sorted(a)
    check_sorted(b)
    return list(heapq.merge(a, b, key=sort_key))


def replay_graph(initial: TemporalDigraph, events: Sequence[Event]) -> TemporalDigraph:
    """Initial graph plus all follow events: the graph state after the log."""
    g = initial.copy()
    for e in events:
        if e.kind == FOLLOW:
            g.add_follow(e.follower, e.followee, e.t)
    return g


# -- follower-set snapshots ----------------------------------------------------

@dataclass(frozen=True, slots=True)
class Snapshot:
    """A polled follower list for one user at one instant."""

    user: int
    t: float
    followers: tuple[int, ...]


def serialize_snapshot(s: Snapshot) -> str:
    return json.dumps(
        {"user": s.user, "t": s.t, "followers": list(s.followers)},
        separators=(",", ":"),
    )


def parse_snapshot_line(text: str) -> Snapshot:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from exc
    _require(isinstance(obj, dict) and set(obj) == {"user", "t", "followers"},
             "snapshot record must have fields ['followers', 't', 'user']")
    user = _check_id(obj["user"], "user")
    t = _check_time(obj["t"], "t")
    fol = obj["followers"]
    _require(isinstance(fol, list), "followers must be a list")
    for x in fol:
        _check_id(x, "follower")
        _require(x != user, "followers must exclude the user herself")
    _require(all(fol[i] < fol[i + 1] for i in range(len(fol) - 1)),
             "followers must be strictly ascending")
    return Snapshot(user=user, t=t, followers=tuple(fol))


def save_snapshots(snapshots: Sequence[Snapshot], path: str) -> None:
    with open(path, "w") as fp:
        for s in snapshots:
            fp.write(serialize_snapshot(s) + "\n")


def load_snapshots(path: str) -> list[Snapshot]:
    out = []
    with open(path) as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(parse_snapshot_line(line))
            except MalformedRecord as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    return out


def iter_kind(events: Iterable[Event], kind: str) -> Iterator[Event]:
    return (e for e in events if e.kind == kind)
