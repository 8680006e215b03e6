"""Argumentation framework with lifecycle-tagged arguments and retraction.

The attack graph is kept acyclic (checked on every edge insertion), which makes
the grounded/complete/preferred/stable extensions coincide in a single
extension computable by topological processing. A subset-enumeration oracle is
provided for cross-checking and for deliberately cyclic test frameworks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence


class DuplicateId(ValueError):
    pass


class UnknownArgument(KeyError):
    pass


class CycleIntroduced(ValueError):
    """The edge would create an attack cycle (outside the acyclic contract)."""


class CyclicFramework(ValueError):
    """Raised by the linear-time extension on a cyclic framework; callers may
    fall back to brute_force_extensions."""


class TooLarge(ValueError):
    pass


class BadStatusTransition(ValueError):
    pass


class ArgType(str, Enum):
    PRO = "pro"
    CON = "con"
    RESOLVE = "resolve"
    OBSERVE = "observe"
    HYPOTHESIZE = "hypothesize"


class ArgStatus(str, Enum):
    ACTIVE = "active"
    WEAKENED = "weakened"
    ABANDONED = "abandoned"
    RESOLVED = "resolved"


# Genuine transitions allowed by the lifecycle state machine. Same-status
# re-affirmations are no-ops and always permitted.
_ALLOWED = {
    (ArgStatus.ACTIVE, ArgStatus.WEAKENED),
    (ArgStatus.ACTIVE, ArgStatus.ABANDONED),
    (ArgStatus.ACTIVE, ArgStatus.RESOLVED),
    (ArgStatus.WEAKENED, ArgStatus.ABANDONED),
}


@dataclass(frozen=True)
class Argument:
    """One argument node.

    ``claim`` is an atom id; ``claim_value`` records the asserted polarity
    (false only for explicit negative resolutions). ``status_turn`` is the turn
    of the most recent status change, so reports can cite when a claim was
    abandoned rather than when it was introduced.
    """

    id: str
    claim: str
    speaker: str
    turn: int
    arg_type: ArgType
    status: ArgStatus = ArgStatus.ACTIVE
    status_turn: int = 0
    claim_value: bool = True

    def with_status(self, status: ArgStatus, turn: int) -> "Argument":
        if status == self.status:
            return self
        if (self.status, status) not in _ALLOWED:
            raise BadStatusTransition(f"{self.id}: {self.status.value} -> {status.value}")
        return replace(self, status=status, status_turn=turn)


@dataclass(frozen=True)
class ArgFramework:
    args: tuple[Argument, ...] = ()
    attacks: tuple[tuple[str, str], ...] = ()

    def ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.args)

    def get(self, arg_id: str) -> Argument:
        for a in self.args:
            if a.id == arg_id:
                return a
        raise UnknownArgument(arg_id)

    def has(self, arg_id: str) -> bool:
        return any(a.id == arg_id for a in self.args)

    def attackers_of(self, arg_id: str) -> list[str]:
        return [s for s, t in self.attacks if t == arg_id]

    def with_argument(self, arg: Argument) -> "ArgFramework":
        if self.has(arg.id):
            raise DuplicateId(arg.id)
        return replace(self, args=self.args + (arg,))

    def with_attack(self, attacker: str, target: str) -> "ArgFramework":
        if not self.has(attacker):
            raise UnknownArgument(attacker)
        if not self.has(target):
            raise UnknownArgument(target)
        if (attacker, target) in self.attacks:
            return self
        if self._reaches(target, attacker):
            raise CycleIntroduced(f"{attacker} -> {target}")
        return replace(self, attacks=self.attacks + ((attacker, target),))

    def _reaches(self, src: str, dst: str) -> bool:
        # DFS along attack edges.
        if src == dst:
            return True
        adj: dict[str, list[str]] = {}
        for s, t in self.attacks:
            adj.setdefault(s, []).append(t)
        stack, seen = [src], {src}
        while stack:
            cur = stack.pop()
            for nxt in adj.get(cur, ()):
                if nxt == dst:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    def with_updated(self, arg: Argument) -> "ArgFramework":
        out = tuple(arg if a.id == arg.id else a for a in self.args)
        if not any(a.id == arg.id for a in self.args):
            raise UnknownArgument(arg.id)
        return replace(self, args=out)

    def without(self, removed: Iterable[str]) -> "ArgFramework":
        gone = set(removed)
        args = tuple(a for a in self.args if a.id not in gone)
        attacks = tuple((s, t) for s, t in self.attacks if s not in gone and t not in gone)
        return ArgFramework(args, attacks)

    def is_acyclic(self) -> bool:
        try:
            _topo_order(self)
            return True
        except CyclicFramework:
            return False


def _topo_order(af: ArgFramework) -> list[str]:
    # Kahn's algorithm over attacker -> target edges.
    indeg = {a.id: 0 for a in af.args}
    adj: dict[str, list[str]] = {a.id: [] for a in af.args}
    for s, t in af.attacks:
        indeg[t] += 1
        adj[s].append(t)
    ready = sorted(i for i, d in indeg.items() if d == 0)
    order: list[str] = []
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        for nxt in adj[cur]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
        ready.sort()
    if len(order) != len(indeg):
        raise CyclicFramework("attack graph contains a cycle")
    return order


def preferred_extension(af: ArgFramework) -> frozenset[str]:
    """The unique extension of an acyclic framework: an argument is IN iff all
    its attackers are OUT, decided in topological order. Linear in
    |args| + |attacks| (plus the sort inside Kahn's queue)."""
    order = _topo_order(af)
    attackers: dict[str, list[str]] = {a.id: [] for a in af.args}
    for s, t in af.attacks:
        attackers[t].append(s)
    status: dict[str, bool] = {}
    for arg_id in order:
        status[arg_id] = all(not status[s] for s in attackers[arg_id])
    return frozenset(i for i, ok in status.items() if ok)


def _conflict_free(subset: frozenset[str], attacks: Sequence[tuple[str, str]]) -> bool:
    return not any(s in subset and t in subset for s, t in attacks)


def _admissible(subset: frozenset[str], af: ArgFramework) -> bool:
    if not _conflict_free(subset, af.attacks):
        return False
    for member in subset:
        for attacker in af.attackers_of(member):
            if not any((d, attacker) in af.attacks for d in subset):
                return False
    return True


def brute_force_extensions(af: ArgFramework) -> frozenset[frozenset[str]]:
    """All preferred extensions by subset enumeration (test oracle; works on
    cyclic frameworks too). Limited to 15 arguments."""
    ids = af.ids()
    if len(ids) > 15:
        raise TooLarge(f"{len(ids)} arguments")
    admissible = []
    for code in range(2 ** len(ids)):
        subset = frozenset(ids[i] for i in range(len(ids)) if (code >> i) & 1)
        if _admissible(subset, af):
            admissible.append(subset)
    preferred = [
        s for s in admissible
        if not any(s < other for other in admissible)
    ]
    return frozenset(preferred)


@dataclass(frozen=True)
class AffectedResult:
    members: frozenset[str]
    unknown_atom: bool = False


def affected(
    atom_id: str,
    extension: frozenset[str],
    dep: Mapping[str, Sequence[str]],
    registry_ids: Optional[Iterable[str]] = None,
) -> AffectedResult:
    """Direct (non-transitive) membership: extension members whose dep set
    contains the atom. Unknown atoms yield an empty result with a warning flag
    rather than an error."""
    unknown = registry_ids is not None and atom_id not in set(registry_ids)
    members = frozenset(a for a in extension if atom_id in dep.get(a, ()))
    return AffectedResult(members, unknown)


@dataclass(frozen=True)
class StatusChange:
    arg_id: str
    was_in: bool
    now_in: bool


@dataclass(frozen=True)
class RetractionReport:
    retracted: str
    mode: str
    affected: frozenset[str]
    removed: frozenset[str]
    surviving_extension: frozenset[str]
    reinstated_or_flagged: tuple[StatusChange, ...]
    unknown_atom: bool = False

    def reinstated(self) -> frozenset[str]:
        return frozenset(c.arg_id for c in self.reinstated_or_flagged if c.now_in and not c.was_in)


def seeded_extension(af: ArgFramework, protect: frozenset[str]) -> frozenset[str]:
    """Extension recomputation with a protected lower bound.

    The protected arguments stay accepted; anything attacking a protected
    argument is overruled; the rest is decided in topological order as usual
    (accepted iff every attacker is out). With an empty lower bound this is
    exactly the unique acyclic extension.
    """
    order = _topo_order(af)
    attackers: dict[str, list[str]] = {a.id: [] for a in af.args}
    overruled: set[str] = set()
    for s, t in af.attacks:
        attackers[t].append(s)
        if t in protect:
            overruled.add(s)
    status: dict[str, bool] = {}
    for arg_id in order:
        if arg_id in protect:
            status[arg_id] = True
        elif arg_id in overruled:
            status[arg_id] = False
        else:
            status[arg_id] = all(not status[s] for s in attackers[arg_id])
    return frozenset(i for i, ok in status.items() if ok)


def retract(
    atom_id: str,
    af: ArgFramework,
    extension: frozenset[str],
    dep: Mapping[str, Sequence[str]],
    mode: str = "direct",
    registry_ids: Optional[Iterable[str]] = None,
) -> RetractionReport:
    """Remove the arguments that lose grounding when ``atom_id`` is retracted.

    direct: remove exactly the extension members depending on the atom, then
    recompute the extension on the reduced framework with the surviving
    members as a protected lower bound. Bare recomputation would let a
    retraction that removes a defender silently evict an argument whose own
    support never mentioned the atom; treating the survivors as given keeps
    the preservation guarantee (survivors are re-examined only through the
    flagged status changes). The surviving set is checked conflict-free and
    is contained in the recomputed extension by construction.

    cascade: additionally iterate: when a removed argument's claim appears in
    a survivor's dep set, the survivor joins the affected set, to fixpoint.
    """
    if mode not in ("direct", "cascade"):
        raise ValueError(f"unknown retraction mode {mode!r}")
    first = affected(atom_id, extension, dep, registry_ids)
    removed = set(first.members)
    if mode == "cascade":
        while True:
            removed_claims = {af.get(a).claim for a in removed}
            grew = False
            for member in extension:
                if member in removed:
                    continue
                if removed_claims & set(dep.get(member, ())):
                    removed.add(member)
                    grew = True
            if not grew:
                break
    reduced = af.without(removed)
    survivors = frozenset(extension - removed)
    if not _conflict_free(survivors, reduced.attacks):
        raise AssertionError("surviving set is not conflict-free after retraction")
    new_extension = seeded_extension(reduced, survivors)
    changes = []
    for arg in reduced.args:
        was = arg.id in extension
        now = arg.id in new_extension
        if was != now:
            changes.append(StatusChange(arg.id, was, now))
    return RetractionReport(
        retracted=atom_id,
        mode=mode,
        affected=first.members,
        removed=frozenset(removed),
        surviving_extension=new_extension,
        reinstated_or_flagged=tuple(changes),
        unknown_atom=first.unknown_atom,
    )


def walk_deps(
    arg_id: str,
    dep: Mapping[str, Sequence[str]],
    af: ArgFramework,
    atom_kinds: Mapping[str, str],
) -> tuple[str, ...]:
    """Transitive dependency closure in first-seen order.

    Hypothesis atoms are chased back through the dep sets of the (non-con)
    arguments claiming them; other atom kinds are leaves. Cycle-safe via
    visited sets.
    """
    af.get(arg_id)
    seen_atoms: list[str] = []
    seen_args = {arg_id}
    queue = list(dep.get(arg_id, ()))
    while queue:
        atom = queue.pop(0)
        if atom in seen_atoms:
            continue
        seen_atoms.append(atom)
        if atom_kinds.get(atom) != "hypothesis":
            continue
        for arg in af.args:
            if arg.claim == atom and arg.arg_type != ArgType.CON and arg.id not in seen_args:
                seen_args.add(arg.id)
                queue.extend(dep.get(arg.id, ()))
    return tuple(seen_atoms)
