"""Simulation configuration, validation and named experiment presets."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .colosseum import (AdversaryProfile, DUTY_DROPPER, KeeperMode, PlayerMode,
                        ValidatorMode)
from .errors import InvalidParameter

ENV_PREFIX = "CDAG_"

# block size / slot length presets used throughout the experiments
CONFIG_PRESETS = {
    "config1": {"block_size_bytes": 1_000_000, "tau": 20.0},
    "config2": {"block_size_bytes": 750_000, "tau": 15.0},
    "config3": {"block_size_bytes": 500_000, "tau": 10.0},
    # desk-scaled variants for low-bandwidth sweeps: same block-bytes to
    # slot-length family as the full-size presets, scaled to 2.5 Mbps links
    "desk1": {"block_size_bytes": 320_000, "tau": 20.0},
    "desk2": {"block_size_bytes": 240_000, "tau": 15.0},
    "desk3": {"block_size_bytes": 160_000, "tau": 10.0},
}


@dataclass(slots=True)
class MaliciousSpec:
    """One adversary assignment: explicit nodes or a fraction of the network."""

    role: str = "all"            # player | validator | keeper | all | barrier
    modes: tuple[int, ...] = ()  # mode numbers for the role; empty = defaults
    nodes: Optional[tuple[int, ...]] = None
    fraction: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"role": self.role, "modes": list(self.modes)}
        if self.nodes is not None:
            out["nodes"] = list(self.nodes)
        if self.fraction is not None:
            out["fraction"] = self.fraction
        return out

    @staticmethod
    def from_dict(d: dict) -> "MaliciousSpec":
        return MaliciousSpec(
            role=d.get("role", "all"),
            modes=tuple(d.get("modes", ())),
            nodes=tuple(d["nodes"]) if d.get("nodes") is not None else None,
            fraction=d.get("fraction"),
        )

    def profile(self) -> AdversaryProfile:
        if self.role == "validator":
            modes = self.modes or (1,)
            return AdversaryProfile(
                validator_modes=frozenset(ValidatorMode(m) for m in modes))
        if self.role == "keeper":
            modes = self.modes or (1, 2)
            return AdversaryProfile(
                keeper_modes=frozenset(KeeperMode(m) for m in modes))
        if self.role == "player":
            modes = self.modes or (1,)
            return AdversaryProfile(
                player_modes=frozenset(PlayerMode(m) for m in modes))
        if self.role == "barrier":
            return AdversaryProfile(bypass_barrier=True)
        if self.role == "all":
            return DUTY_DROPPER
        raise InvalidParameter(f"unknown adversary role {self.role!r}")


@dataclass(slots=True)
class SimConfig:
    """Everything one seeded run depends on."""

    n: int = 32
    alpha: int = 3
    k: int = 16
    tau: float = 20.0
    b: int = 40
    f: int = 3
    block_size_bytes: int = 1_000_000
    bandwidth_bps: float = 25_000_000.0
    latency_ms_range: tuple[float, float] = (20.0, 100.0)
    tx_rate: float = 0.05            # transactions per second per node
    tx_bytes: int = 350
    double_spend_rate: float = 0.0
    malicious: tuple[MaliciousSpec, ...] = ()
    duration_slots: int = 30
    seed: int = 0
    # barrier behavior
    skew_bound_ms: float = 500.0
    drift_ms_per_slot: float = 0.0
    resync_threshold: int = 3
    # tournament timing, as fractions of the slot length
    pairing_deadline_frac: float = 0.15
    validator_wait_frac: float = 0.10
    proposal_wait_frac: float = 0.08
    keeper_query_wait_frac: float = 0.05
    keeper_vote_delay_frac: float = 0.04
    probe_budget: int = 0            # 0 = default max(2*ceil(log2 n), 32)
    probe_pipeline: int = 6
    probe_retry_s: float = 0.5
    # dissemination
    header_bytes: int = 256
    keeper_fanout_div: int = 4       # validator/player keeper fan-out = ceil(k / div)
    keeper_gossip_fanout: int = 3
    pad_blocks: bool = True          # pad bodies to block_size_bytes on the wire
    # bookkeeping
    drain_slots: int = 2
    pending_eviction_slots: float = 4.0
    warmup_slots: int = 0            # 0 = default f + 1
    collect_trace: bool = True

    def effective_probe_budget(self) -> int:
        if self.probe_budget > 0:
            return self.probe_budget
        # a cap, not a target: typical pairings take a handful of probes,
        # but an unlucky straggler may need a full sweep of the ring
        return max(2 * math.ceil(math.log2(max(self.n, 2))), 2 * self.n)

    def effective_warmup(self) -> int:
        return self.warmup_slots if self.warmup_slots > 0 else self.f + 1

    def horizon(self) -> float:
        """End of simulated time: all slots plus the drain window."""
        return (self.duration_slots + 1 + self.drain_slots) * self.tau

    def validate(self) -> list[str]:
        """Accumulate human-readable reasons the config cannot run."""
        bad = []
        if self.n < 2:
            bad.append(f"n must be >= 2, got {self.n}")
        if self.alpha < 1:
            bad.append(f"alpha must be >= 1, got {self.alpha}")
        elif self.n >= 2 and 2 ** self.alpha >= self.n:
            bad.append(f"alpha={self.alpha} is not below log2(n={self.n})")
        if not 1 <= self.k <= self.n - 1:
            bad.append(f"k must be in [1, n-1], got {self.k}")
        if self.b < 1:
            bad.append(f"b must be >= 1, got {self.b}")
        if self.f < 1:
            bad.append(f"f must be >= 1, got {self.f}")
        if self.tau <= 0:
            bad.append(f"tau must be positive, got {self.tau}")
        if self.block_size_bytes <= 0:
            bad.append("block_size_bytes must be positive")
        if self.bandwidth_bps <= 0:
            bad.append("bandwidth_bps must be positive")
        lo, hi = self.latency_ms_range
        if lo < 0 or hi < lo:
            bad.append(f"latency_ms_range invalid: {self.latency_ms_range}")
        if self.tx_rate < 0 or self.double_spend_rate < 0 or self.double_spend_rate > 1:
            bad.append("tx_rate/double_spend_rate out of range")
        if self.duration_slots < 1:
            bad.append("duration_slots must be >= 1")
        return bad

    def check(self) -> "SimConfig":
        problems = self.validate()
        if problems:
            raise InvalidParameter("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["latency_ms_range"] = list(self.latency_ms_range)
        d["malicious"] = [m.to_dict() for m in self.malicious]
        return d

    @staticmethod
    def from_dict(d: dict) -> "SimConfig":
        d = dict(d)
        d.pop("config", None)
        if "latency_ms_range" in d:
            d["latency_ms_range"] = tuple(d["latency_ms_range"])
        if "malicious" in d:
            d["malicious"] = tuple(
                MaliciousSpec.from_dict(m) if isinstance(m, dict) else m
                for m in d["malicious"])
        known = {f.name for f in fields(SimConfig)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidParameter(f"unknown config keys: {', '.join(unknown)}")
        return SimConfig(**d)

    def with_preset(self, name: str) -> "SimConfig":
        preset = CONFIG_PRESETS.get(name)
        if preset is None:
            raise InvalidParameter(f"unknown config preset {name!r}")
        return replace(self, **preset)

    def malicious_fraction(self) -> float:
        """Fraction of nodes with any misbehavior, for reporting."""
        nodes = set()
        for spec in self.malicious:
            if spec.nodes is not None:
                nodes.update(spec.nodes)
            elif spec.fraction:
                # counted without materializing the selection
                return max(min(spec.fraction, 1.0), 0.0)
        return len(nodes) / self.n if self.n else 0.0


def malicious_fraction_spec(fraction: float, role: str = "all",
                            modes: tuple[int, ...] = ()) -> MaliciousSpec:
    return MaliciousSpec(role=role, modes=modes, fraction=fraction)


def apply_env_overrides(cfg: SimConfig, environ=None) -> SimConfig:
    """Override scalar config keys from CDAG_-prefixed environment variables."""
    environ = os.environ if environ is None else environ
    updates = {}
    for f in fields(SimConfig):
        raw = environ.get(ENV_PREFIX + f.name.upper())
        if raw is None:
            continue
        if f.name == "malicious":
            updates[f.name] = tuple(
                MaliciousSpec.from_dict(m) for m in json.loads(raw))
        elif f.name == "latency_ms_range":
            lo, hi = (float(x) for x in raw.split(","))
            updates[f.name] = (lo, hi)
        elif f.name in ("collect_trace", "pad_blocks"):
            updates[f.name] = raw.lower() in ("1", "true", "yes")
        elif isinstance(getattr(cfg, f.name), int):
            updates[f.name] = int(raw)
        else:
            updates[f.name] = float(raw)
    return replace(cfg, **updates) if updates else cfg


def load_config(path: str) -> SimConfig:
    with open(path) as fh:
        data = json.load(fh)
    preset = data.pop("config", None)
    cfg = SimConfig.from_dict(data)
    if preset:
        cfg = cfg.with_preset(preset)
    return cfg
