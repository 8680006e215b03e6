"""Formula language shared by the epistemic model, the engine and scenario files.

Formulas are immutable trees. The JSON encoding used in scenario documents and
on the interpreter wire mirrors the constructors one-to-one:

    {"atom": "o6"}
    {"not": F}
    {"and": [F, ...]}            {"or": [F, ...]}
    {"implies": [F, F]}
    {"knows": ["a", F]}          {"believes": ["a", F]}
    {"aware": ["a", F]}          {"common": [["a", "b"], F]}
    {"const": true}              (verum / falsum)

``canonical()`` sorts commutative connectives and removes double negations;
``key()`` is the canonical string used for awareness membership and for
abductive-queue identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union


class FormulaError(ValueError):
    """Raised for malformed formula documents."""


@dataclass(frozen=True)
class Formula:
    def atoms(self) -> frozenset[str]:
        raise NotImplementedError

    def canonical(self) -> "Formula":
        return self

    def key(self) -> str:
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def __str__(self) -> str:
        return self.key()


@dataclass(frozen=True)
class Const(Formula):
    value: bool

    def atoms(self) -> frozenset[str]:
        return frozenset()

    def key(self) -> str:
        return "true" if self.value else "false"

    def to_json(self):
        return {"const": self.value}


TOP = Const(True)
BOTTOM = Const(False)


@dataclass(frozen=True)
class AtomRef(Formula):
    atom: str

    def atoms(self) -> frozenset[str]:
        return frozenset({self.atom})

    def key(self) -> str:
        return self.atom

    def to_json(self):
        return {"atom": self.atom}


@dataclass(frozen=True)
class Not(Formula):
    sub: Formula

    def atoms(self) -> frozenset[str]:
        return self.sub.atoms()

    def canonical(self) -> Formula:
        inner = self.sub.canonical()
        if isinstance(inner, Not):
            return inner.sub
        return Not(inner)

    def key(self) -> str:
        return f"(not {self.sub.key()})"

    def to_json(self):
        return {"not": self.sub.to_json()}


def _canon_parts(parts: Iterable[Formula]) -> tuple[Formula, ...]:
    return tuple(sorted((p.canonical() for p in parts), key=lambda f: f.key()))


@dataclass(frozen=True)
class And(Formula):
    parts: tuple[Formula, ...]

    def __init__(self, parts: Iterable[Formula]):
        object.__setattr__(self, "parts", tuple(parts))

    def atoms(self) -> frozenset[str]:
        return frozenset().union(*(p.atoms() for p in self.parts)) if self.parts else frozenset()

    def canonical(self) -> Formula:
        return And(_canon_parts(self.parts))

    def key(self) -> str:
        return "(and " + " ".join(p.key() for p in self.parts) + ")"

    def to_json(self):
        return {"and": [p.to_json() for p in self.parts]}


@dataclass(frozen=True)
class Or(Formula):
    parts: tuple[Formula, ...]

    def __init__(self, parts: Iterable[Formula]):
        object.__setattr__(self, "parts", tuple(parts))

    def atoms(self) -> frozenset[str]:
        return frozenset().union(*(p.atoms() for p in self.parts)) if self.parts else frozenset()

    def canonical(self) -> Formula:
        return Or(_canon_parts(self.parts))

    def key(self) -> str:
        return "(or " + " ".join(p.key() for p in self.parts) + ")"

    def to_json(self):
        return {"or": [p.to_json() for p in self.parts]}


@dataclass(frozen=True)
class Implies(Formula):
    antecedent: Formula
    consequent: Formula

    def atoms(self) -> frozenset[str]:
        return self.antecedent.atoms() | self.consequent.atoms()

    def canonical(self) -> Formula:
        return Implies(self.antecedent.canonical(), self.consequent.canonical())

    def key(self) -> str:
        return f"(implies {self.antecedent.key()} {self.consequent.key()})"

    def to_json(self):
        return {"implies": [self.antecedent.to_json(), self.consequent.to_json()]}


@dataclass(frozen=True)
class Knows(Formula):
    agent: str
    sub: Formula

    def atoms(self) -> frozenset[str]:
        return self.sub.atoms()

    def canonical(self) -> Formula:
        return Knows(self.agent, self.sub.canonical())

    def key(self) -> str:
        return f"(knows {self.agent} {self.sub.key()})"

    def to_json(self):
        return {"knows": [self.agent, self.sub.to_json()]}


@dataclass(frozen=True)
class Believes(Formula):
    agent: str
    sub: Formula

    def atoms(self) -> frozenset[str]:
        return self.sub.atoms()

    def canonical(self) -> Formula:
        return Believes(self.agent, self.sub.canonical())

    def key(self) -> str:
        return f"(believes {self.agent} {self.sub.key()})"

    def to_json(self):
        return {"believes": [self.agent, self.sub.to_json()]}


@dataclass(frozen=True)
class Aware(Formula):
    agent: str
    sub: Formula

    def atoms(self) -> frozenset[str]:
        return self.sub.atoms()

    def canonical(self) -> Formula:
        return Aware(self.agent, self.sub.canonical())

    def key(self) -> str:
        return f"(aware {self.agent} {self.sub.key()})"

    def to_json(self):
        return {"aware": [self.agent, self.sub.to_json()]}


@dataclass(frozen=True)
class Common(Formula):
    agents: frozenset[str]
    sub: Formula

    def __init__(self, agents: Iterable[str], sub: Formula):
        object.__setattr__(self, "agents", frozenset(agents))
        object.__setattr__(self, "sub", sub)

    def atoms(self) -> frozenset[str]:
        return self.sub.atoms()

    def canonical(self) -> Formula:
        return Common(self.agents, self.sub.canonical())

    def key(self) -> str:
        return f"(common [{','.join(sorted(self.agents))}] {self.sub.key()})"

    def to_json(self):
        return {"common": [sorted(self.agents), self.sub.to_json()]}


FormulaDoc = Union[dict, str, bool]


def formula_from_json(doc: FormulaDoc) -> Formula:
    """Decode the JSON formula encoding. A bare string is an atom reference."""
    if isinstance(doc, str):
        return AtomRef(doc)
    if isinstance(doc, bool):
        return Const(doc)
    if not isinstance(doc, dict) or len(doc) != 1:
        raise FormulaError(f"malformed formula document: {doc!r}")
    tag, body = next(iter(doc.items()))
    if tag == "atom":
        return AtomRef(body)
    if tag == "const":
        return Const(bool(body))
    if tag == "not":
        return Not(formula_from_json(body))
    if tag == "and":
        return And(formula_from_json(p) for p in body)
    if tag == "or":
        return Or(formula_from_json(p) for p in body)
    if tag == "implies":
        if len(body) != 2:
            raise FormulaError("implies takes exactly two parts")
        return Implies(formula_from_json(body[0]), formula_from_json(body[1]))
    if tag in ("knows", "believes", "aware"):
        agent, sub = body
        cls = {"knows": Knows, "believes": Believes, "aware": Aware}[tag]
        return cls(agent, formula_from_json(sub))
    if tag == "common":
        agents, sub = body
        return Common(agents, formula_from_json(sub))
    raise FormulaError(f"unknown formula tag: {tag!r}")
