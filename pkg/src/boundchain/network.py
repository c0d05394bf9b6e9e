"""Reaction networks with polynomial propensities and weighted class partitions.

States are vectors of species counts.  A partition with positive integer
weights w assigns state x to class w.x, so every class
S_l = {x : w.x = l} is a finite slice of the lattice.  That finiteness is
what makes the min/max tables of the bound builder computable by exact
enumeration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ResourceLimitError, ValidationError

DEFAULT_CLASS_CAP = 10_000_000

_FACTOR_KINDS = ("plain-power", "falling-factorial")


@dataclass(frozen=True)
class Factor:
    """One per-species factor of a propensity term."""

    species: int
    exponent: int = 1
    kind: str = "plain-power"

    def __post_init__(self):
        if self.exponent < 1:
            raise ValidationError("factor exponent must be a positive integer")
        if self.kind not in _FACTOR_KINDS:
            raise ValidationError(f"unknown factor kind {self.kind!r}")

    def evaluate(self, counts: np.ndarray) -> np.ndarray:
        x = np.asarray(counts, dtype=float)
        if self.kind == "plain-power":
            return x ** self.exponent
        # falling factorial x(x-1)...(x-r+1)
        out = x.copy()
        for r in range(1, self.exponent):
            out = out * (x - r)
        return out


@dataclass(frozen=True)
class Term:
    coeff: float
    factors: tuple[Factor, ...] = ()


class PropensityPolynomial:
    """Sum of coefficient times product-of-factors terms on count vectors."""

    def __init__(self, terms):
        self.terms = tuple(terms)

    def evaluate(self, state) -> float:
        x = np.asarray(state, dtype=float).reshape(1, -1)
        return float(self.evaluate_many(x)[0])

    def evaluate_many(self, states) -> np.ndarray:
        """Vectorized evaluation on an (n, d) array of states."""
        X = np.asarray(states, dtype=float)
        out = np.zeros(X.shape[0])
        for term in self.terms:
            val = np.full(X.shape[0], float(term.coeff))
            for f in term.factors:
                val *= f.evaluate(X[:, f.species])
            out += val
        return out

    def is_structurally_zero(self) -> bool:
        return all(t.coeff == 0.0 for t in self.terms)


@dataclass(frozen=True)
class Reaction:
    change: tuple[int, ...]
    propensity: PropensityPolynomial


class ReactionNetwork:
    """Finite list of reactions over a fixed species vector."""

    def __init__(self, species, reactions, parameters=None):
        self.species = tuple(str(s) for s in species)
        if not self.species:
            raise ValidationError("network needs at least one species")
        if len(set(self.species)) != len(self.species):
            raise ValidationError("species names must be unique")
        self.reactions = tuple(reactions)
        self.parameters = dict(parameters or {})
        for r in self.reactions:
            if len(r.change) != self.d:
                raise ValidationError(
                    f"change vector {r.change} does not match {self.d} species"
                )

    @property
    def d(self) -> int:
        return len(self.species)

    def change_matrix(self) -> np.ndarray:
        return np.array([r.change for r in self.reactions], dtype=np.int64)


def network_from_dict(doc: dict) -> ReactionNetwork:
    """Build a network from the JSON document layout.

    Keys: ``species`` (names), ``parameters`` (name -> number), ``reactions``
    (list of {change, propensity}); propensity terms carry ``coeff`` (number
    or parameter name) and ``factors`` ({species, exponent, kind}).
    """
    try:
        species = [str(s) for s in doc["species"]]
        params = {str(k): float(v) for k, v in dict(doc.get("parameters", {})).items()}
        reactions = []
        for rx in doc["reactions"]:
            change = tuple(int(c) for c in rx["change"])
            terms = []
            for t in rx["propensity"]:
                coeff = t["coeff"]
                if isinstance(coeff, str):
                    if coeff not in params:
                        raise ValidationError(f"unbound parameter {coeff!r}")
                    coeff = params[coeff]
                factors = []
                for f in t.get("factors", ()):
                    sp = f["species"]
                    if isinstance(sp, str):
                        if sp not in species:
                            raise ValidationError(f"unknown species {sp!r}")
                        sp = species.index(sp)
                    factors.append(
                        Factor(int(sp), int(f.get("exponent", 1)),
                               str(f.get("kind", "plain-power")))
                    )
                terms.append(Term(float(coeff), tuple(factors)))
            reactions.append(Reaction(change, PropensityPolynomial(terms)))
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ValidationError(f"malformed network document: {exc}") from exc
    return ReactionNetwork(species, reactions, params)


def load_network(path) -> ReactionNetwork:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read network file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"network file {path} is not valid JSON: {exc}") from exc
    return network_from_dict(doc)


@dataclass(frozen=True)
class ClassPartition:
    """Positive integer weights; class of x is the dot product w.x."""

    weights: tuple[int, ...]

    def __post_init__(self):
        w = tuple(int(v) for v in self.weights)
        if not w or any(v < 1 for v in w):
            raise ValidationError("class weights must be positive integers")
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return len(self.weights)

    def class_of(self, state) -> int:
        x = np.asarray(state)
        if x.shape != (self.d,):
            raise ValidationError(
                f"state of length {x.shape} does not match {self.d} weights"
            )
        if (x < 0).any():
            raise ValidationError("state components must be nonnegative")
        return int(np.dot(self.weights, x))


def class_of(state, partition: ClassPartition) -> int:
    return partition.class_of(state)


@lru_cache(maxsize=None)
def _class_count(weights: tuple[int, ...], ell: int) -> int:
    if ell < 0:
        return 0
    if not weights:
        return 1 if ell == 0 else 0
    head, rest = weights[0], weights[1:]
    return sum(_class_count(rest, ell - head * v) for v in range(ell // head + 1))


def class_size(ell: int, partition: ClassPartition) -> int:
    """Number of states in class ``ell``, without materializing them."""
    if ell < 0:
        raise ValidationError("class index must be nonnegative")
    return _class_count(partition.weights, ell)


def enumerate_class(ell: int, partition: ClassPartition,
                    cap: int = DEFAULT_CLASS_CAP) -> np.ndarray:
    """All states of class ``ell`` as an (n, d) array in lexicographic order."""
    if ell < 0:
        raise ValidationError("class index must be nonnegative")
    n = class_size(ell, partition)
    if n > cap:
        raise ResourceLimitError(
            f"class {ell} holds {n} states, above the cap of {cap}"
        )
    w = partition.weights
    d = partition.d

    def build(rem: int, k: int) -> np.ndarray:
        if k == d - 1:
            if rem % w[k] == 0:
                return np.array([[rem // w[k]]], dtype=np.int64)
            return np.empty((0, 1), dtype=np.int64)
        if k == d - 2:
            # two-weight tail solved vectorized: w[k]*v + w[k+1]*u = rem
            v = np.arange(rem // w[k] + 1, dtype=np.int64)
            r = rem - w[k] * v
            ok = (r % w[k + 1]) == 0
            return np.stack([v[ok], r[ok] // w[k + 1]], axis=1)
        blocks = []
        for v in range(rem // w[k] + 1):
            sub = build(rem - v * w[k], k + 1)
            if sub.shape[0]:
                col = np.full((sub.shape[0], 1), v, dtype=np.int64)
                blocks.append(np.hstack([col, sub]))
        if not blocks:
            return np.empty((0, d - k), dtype=np.int64)
        return np.vstack(blocks)

    out = build(ell, 0)
    if d == 1:
        out = out.reshape(-1, 1)
    return out


def class_shift(reaction: Reaction, partition: ClassPartition) -> int:
    """Signed class displacement w.nu of one reaction."""
    return int(np.dot(partition.weights, reaction.change))


def j_max(network: ReactionNetwork, partition: ClassPartition) -> int:
    """Band half-width: the largest absolute class shift over all reactions."""
    shifts = [abs(class_shift(r, partition)) for r in network.reactions]
    j = max(shifts, default=0)
    if j == 0:
        raise ValidationError("no reaction changes the class; band width is zero")
    return j


def aggregate_rate(state, interval, network: ReactionNetwork,
                   partition: ClassPartition) -> float:
    """Total rate from ``state`` into classes inside ``interval = (lo, hi)``.

    ``hi`` may be ``float('inf')``.  Sums the propensities of every reaction
    whose class shift lands cl(state)+shift inside the interval.
    """
    lo, hi = interval
    ell = partition.class_of(state)
    total = 0.0
    for r in network.reactions:
        dest = ell + class_shift(r, partition)
        if lo <= dest <= hi:
            total += r.propensity.evaluate(state)
    return total


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def summary(self) -> str:
        if self.ok:
            return "network valid"
        lines = [f"{len(self.violations)} violation(s):"]
        lines += [f"  - {v['kind']}: {v['detail']}" for v in self.violations]
        return "\n".join(lines)


def validate_network(network: ReactionNetwork, partition: ClassPartition,
                     window: int, cap: int = DEFAULT_CLASS_CAP) -> ValidationReport:
    """Check propensity sign and boundary-leak freedom on classes <= window."""
    violations = []
    nu = network.change_matrix()
    null_change_active = [False] * len(network.reactions)
    seen = 0
    for ell in range(window + 1):
        seen += class_size(ell, partition)
        if seen > cap:
            raise ResourceLimitError(
                f"validation window holds more than {cap} states"
            )
        X = enumerate_class(ell, partition, cap=cap)
        if X.shape[0] == 0:
            continue
        for ridx, r in enumerate(network.reactions):
            vals = r.propensity.evaluate_many(X)
            neg = np.flatnonzero(vals < -1e-12)
            if neg.size:
                x = tuple(int(v) for v in X[neg[0]])
                violations.append({
                    "kind": "negative-propensity",
                    "reaction": ridx,
                    "state": x,
                    "detail": f"reaction {ridx} has rate {vals[neg[0]]} at {x}",
                })
            leaves = (X + nu[ridx] < 0).any(axis=1)
            leak = np.flatnonzero(leaves & (np.abs(vals) > 1e-12))
            if leak.size:
                x = tuple(int(v) for v in X[leak[0]])
                violations.append({
                    "kind": "boundary-leak",
                    "reaction": ridx,
                    "state": x,
                    "detail": (
                        f"reaction {ridx} fires at rate {vals[leak[0]]} from {x} "
                        "although the destination has a negative count"
                    ),
                })
            if not nu[ridx].any() and np.abs(vals).max() > 1e-12:
                null_change_active[ridx] = True
    for ridx, active in enumerate(null_change_active):
        if active:
            violations.append({
                "kind": "null-change",
                "reaction": ridx,
                "state": None,
                "detail": f"reaction {ridx} has zero change vector but nonzero rate",
            })
    return ValidationReport(ok=not violations, violations=violations)
