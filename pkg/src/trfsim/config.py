"""Flat `key = value` experiment configuration files.

Keys are the SimConfig field names.  `#` starts a comment; blank lines are
ignored.  `initial_graph` is a path to a graph CSV (resolved relative to the
config file); the parameter pairs are written `p,q`; `tweeters` is either
`all`, a comma list, or an inclusive id range like `100-199`.
"""

from __future__ import annotations

import json
import os

from .errors import InvalidConfig
from .graph import read_graph_csv
from .inference import TrfModelParams
from .simulate import SimConfig, parse_latency_dist

_FLOAT_KEYS = ("duration", "delta", "tweet_rate", "retweet_prob",
               "exo_follow_rate", "poll_interval")


def _parse_params(value: str, key: str) -> TrfModelParams:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise InvalidConfig(f"{key} must be 'p,q', got {value!r}")
    try:
        return TrfModelParams(p=float(parts[0]), q=float(parts[1]))
    except ValueError as exc:
        raise InvalidConfig(f"{key}: {exc}") from exc


def _parse_tweeters(value: str) -> tuple[int, ...] | None:
    value = value.strip()
    if value == "all":
        return None
    users: list[int] = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            users.extend(range(int(lo), int(hi) + 1))
        else:
            users.append(int(part))
    if not users:
        raise InvalidConfig("tweeters must be 'all', a comma list, or a range")
    return tuple(sorted(set(users)))


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise InvalidConfig(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_sim_config(path: str, overrides: dict[str, str] | None = None) -> SimConfig:
    """Read a config file into a SimConfig; `overrides` replace file values."""
    with open(path) as fp:
        kv = parse_key_values(fp.read(), source=path)
    if overrides:
        kv.update({k: str(v) for k, v in overrides.items() if v is not None})
    if "initial_graph" not in kv:
        raise InvalidConfig(f"{path}: missing required key 'initial_graph'")
    graph_path = kv.pop("initial_graph")
    if not os.path.isabs(graph_path):
        graph_path = os.path.join(os.path.dirname(os.path.abspath(path)), graph_path)
    graph = read_graph_csv(graph_path)
    if "duration" not in kv:
        raise InvalidConfig(f"{path}: missing required key 'duration'")

    cfg = SimConfig(initial_graph=graph, duration=0.0)
    for key in _FLOAT_KEYS:
        if key in kv:
            try:
                setattr(cfg, key, float(kv.pop(key)))
            except ValueError as exc:
                raise InvalidConfig(f"{path}: {key}: {exc}") from exc
    if "seed" in kv:
        cfg.seed = int(kv.pop("seed"))
    if "multi_hop" in kv:
        value = kv.pop("multi_hop").lower()
        if value not in ("true", "false"):
            raise InvalidConfig(f"{path}: multi_hop must be true or false")
        cfg.multi_hop = value == "true"
    if "retweet_latency_dist" in kv:
        cfg.retweet_latency_dist = parse_latency_dist(kv.pop("retweet_latency_dist"))
    if "params_reciprocal" in kv:
        cfg.params_reciprocal = _parse_params(kv.pop("params_reciprocal"), "params_reciprocal")
    if "params_nonreciprocal" in kv:
        cfg.params_nonreciprocal = _parse_params(
            kv.pop("params_nonreciprocal"), "params_nonreciprocal")
    if "tweeters" in kv:
        cfg.tweeters = _parse_tweeters(kv.pop("tweeters"))
    if kv:
        raise InvalidConfig(f"{path}: unknown keys: {sorted(kv)}")
    cfg.validate()
    return cfg


def describe_sim_config(cfg: SimConfig, graph_path: str | None = None) -> dict:
    """JSON-friendly view of a config, for run manifests."""
    return {
        "initial_graph": graph_path,
        "n_users": len(cfg.initial_graph.users()),
        "n_edges": cfg.initial_graph.n_edges,
        "duration": cfg.duration,
        "delta": cfg.delta,
        "tweet_rate": cfg.tweet_rate,
        "retweet_prob": cfg.retweet_prob,
        "retweet_latency_dist": cfg.retweet_latency_dist.spec(),
        "params_reciprocal": {"p": cfg.params_reciprocal.p, "q": cfg.params_reciprocal.q},
        "params_nonreciprocal": {
            "p": cfg.params_nonreciprocal.p, "q": cfg.params_nonreciprocal.q},
        "exo_follow_rate": cfg.exo_follow_rate,
        "seed": cfg.seed,
        "poll_interval": cfg.poll_interval,
        "multi_hop": cfg.multi_hop,
        "tweeters": list(cfg.tweeters) if cfg.tweeters is not None else "all",
    }


def write_manifest(out_dir: str, payload: dict) -> str:
    """Deterministic manifest.json describing one run (no timestamps)."""
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")
    return path
