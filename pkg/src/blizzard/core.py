"""Shared protocol vocabulary: parameters, populations, identities, messages.

Every tunable symbol used by the other modules (n, m, k, alpha, eta,
beta1, beta2, rho_n, rho_b) lives here together with its validity bounds,
so experiment configs fail fast and in one place.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Optional

NodeId = int
BrokerId = int
TxId = str


class BlizzardError(Exception):
    """Base class for protocol-lab errors."""


class ConfigError(BlizzardError):
    """Config file missing, malformed, or referencing unknown options."""


class ValidationError(BlizzardError):
    """Parameters or populations violate their bounds."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def exact_fraction(x) -> Fraction:
    """Interpret a threshold as an exact decimal fraction.

    Thresholds arrive from configs as floats such as 0.8.  Promoting the
    decimal string (not the binary float) keeps majority comparisons of
    the form ``count >= ceil(threshold * population)`` unambiguous at
    exact boundaries like 0.8 * 10.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


def vote_threshold(fraction, population: int) -> int:
    """Smallest integer count satisfying ``count >= fraction * population``."""
    if population < 0:
        raise ValueError("population must be non-negative")
    return math.ceil(exact_fraction(fraction) * population)


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class ProtocolParams:
    """Tunable protocol symbols.

    n      total mobile nodes
    m      total brokers
    k      brokers sampled per node
    alpha  node-side majority threshold over k broker results, 1/2 < alpha < 1
    eta    broker-side majority threshold over connected-node votes,
           1/2 < eta <= 1 (the upper boundary is admitted; see README)
    beta1  consecutive-counter security threshold
    beta2  confidence-counter security threshold
    """

    n: int
    m: int
    k: int
    alpha: float = 0.8
    eta: float = 0.8
    beta1: int = 11
    beta2: int = 150

    def node_majority(self) -> int:
        """Broker results a node needs before accepting a query outcome."""
        return vote_threshold(self.alpha, self.k)

    def broker_majority(self, connected: int) -> int:
        """Same-vote count a broker needs among `connected` responders."""
        return vote_threshold(self.eta, connected)


@dataclass(frozen=True)
class Population:
    """Split of nodes and brokers into correct and Byzantine counts."""

    c: int
    b: int
    m_c: int
    m_b: int

    @property
    def n(self) -> int:
        return self.c + self.b

    @property
    def m(self) -> int:
        return self.m_c + self.m_b

    @property
    def rho_n(self) -> float:
        return self.b / self.n if self.n else 0.0

    @property
    def rho_b(self) -> float:
        return self.m_b / self.m if self.m else 0.0

    @classmethod
    def from_ratios(cls, n: int, m: int, rho_n: float, rho_b: float) -> "Population":
        """Integer population for target Byzantine ratios (nearest counts)."""
        b = round_half_away(rho_n * n)
        m_b = round_half_away(rho_b * m)
        return cls(c=n - b, b=b, m_c=m - m_b, m_b=m_b)


class MessageKind(Enum):
    NODE_QUERY = "node_query"        # node -> broker, asks for a tx verdict
    BROKER_QUERY = "broker_query"    # broker -> node, polls for a vote
    NODE_RESPONSE = "node_response"  # node -> broker, yes/no or color
    BROKER_RESULT = "broker_result"  # broker -> node, aggregated verdict


@dataclass(frozen=True)
class Message:
    """One directed protocol message.

    A broker result is broadcast as one message per connected node, so a
    Message always has exactly one sender and one receiver.
    """

    kind: MessageKind
    sender: int
    receiver: int
    payload: Any = None


def validate_params(params: ProtocolParams, pop: Optional[Population] = None) -> list[str]:
    """Return all violated invariants; an empty list means valid."""
    errors = []
    half = Fraction(1, 2)
    alpha = exact_fraction(params.alpha)
    eta = exact_fraction(params.eta)
    if not (half < alpha < 1):
        errors.append(
            f"AlphaOutOfRange: alpha must satisfy 1/2 < alpha < 1, got {params.alpha}"
        )
    if not (half < eta <= 1):
        errors.append(
            f"EtaOutOfRange: eta must satisfy 1/2 < eta <= 1, got {params.eta}"
        )
    if params.k < 1:
        errors.append(f"KOutOfRange: k must be >= 1, got {params.k}")
    if params.k > params.m:
        errors.append(f"KExceedsM: k={params.k} exceeds broker count m={params.m}")
    if params.m > params.n:
        errors.append(f"MExceedsN: m={params.m} exceeds node count n={params.n}")
    if params.n < 1:
        errors.append(f"NOutOfRange: n must be >= 1, got {params.n}")
    if params.beta1 < 1:
        errors.append(f"Beta1OutOfRange: beta1 must be >= 1, got {params.beta1}")
    if params.beta2 < 1:
        errors.append(f"Beta2OutOfRange: beta2 must be >= 1, got {params.beta2}")
    if pop is not None:
        if min(pop.c, pop.b, pop.m_c, pop.m_b) < 0:
            errors.append("NegativeCount: population counts must be non-negative")
        if pop.n != params.n:
            errors.append(
                f"NodeCountMismatch: c + b = {pop.n} does not match n = {params.n}"
            )
        if pop.m != params.m:
            errors.append(
                f"BrokerCountMismatch: m_c + m_b = {pop.m} does not match m = {params.m}"
            )
    return errors


def require_valid(params: ProtocolParams, pop: Optional[Population] = None) -> None:
    """Raise ValidationError listing every violated bound."""
    errors = validate_params(params, pop)
    if errors:
        raise ValidationError(errors)


# Documented config keys.  A config file is flat JSON; subcommand sections
# may override any of these per experiment.
CONFIG_KEYS = (
    "n", "m", "k", "alpha", "eta", "beta1", "beta2", "rho_n", "rho_b", "seed",
)


def load_config(path) -> dict:
    """Load a JSON experiment config."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def params_from_config(cfg: dict, section: Optional[str] = None) -> ProtocolParams:
    """Build ProtocolParams from a flat config, optionally overlaying a section."""
    merged = dict(cfg)
    if section and isinstance(cfg.get(section), dict):
        merged.update(cfg[section])
    try:
        params = ProtocolParams(
            n=int(merged["n"]),
            m=int(merged["m"]),
            k=int(merged["k"]),
            alpha=float(merged.get("alpha", 0.8)),
            eta=float(merged.get("eta", 0.8)),
            beta1=int(merged.get("beta1", 11)),
            beta2=int(merged.get("beta2", 150)),
        )
    except KeyError as exc:
        raise ConfigError(f"config missing required key: {exc.args[0]}") from exc
    return params


def population_from_config(cfg: dict, params: ProtocolParams,
                           section: Optional[str] = None) -> Population:
    merged = dict(cfg)
    if section and isinstance(cfg.get(section), dict):
        merged.update(cfg[section])
    rho_n = float(merged.get("rho_n", 0.0))
    rho_b = float(merged.get("rho_b", 0.0))
    return Population.from_ratios(params.n, params.m, rho_n, rho_b)
