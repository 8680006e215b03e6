"""Explicit-world epistemic plausibility models.

A model is an immutable value: every update operator returns a new model.
Plausibility is kept as integer ranks per (agent, world); lower is more
plausible. Indistinguishability is an explicit per-agent cell assignment
(world id -> cell key), so local connectedness holds by representation and
both public-announcement scenarios (one cell) and observability-mask
scenarios (cells keyed by the visible valuation) use the same machinery.

World ids are valuation bitstrings over registry order; awareness expansion
appends one bit, so ids are deterministic and prefix-stable across a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .formulas import (
    And,
    AtomRef,
    Aware,
    Believes,
    Common,
    Const,
    Formula,
    Implies,
    Knows,
    Not,
    Or,
)


class UnknownAtom(KeyError):
    """A formula referenced an atom missing from the registry (caller bug)."""


class UnknownWorld(KeyError):
    """An operation referenced a world id not in the model (caller bug)."""


class NoOpExpansion(ValueError):
    """Awareness expansion with an atom already known to all listed agents."""


ATOM_KINDS = ("observable", "hypothesis", "assumption", "meta")


@dataclass(frozen=True)
class Atom:
    """A registered proposition. ``kind`` is immutable after creation."""

    id: str
    kind: str = "observable"
    label: str = ""

    def __post_init__(self):
        if self.kind not in ATOM_KINDS:
            raise ValueError(f"unknown atom kind {self.kind!r}")


@dataclass(frozen=True)
class World:
    """A possible world: id plus a total valuation over the registry."""

    id: str
    values: tuple[bool, ...]


def _bits(values: Sequence[bool]) -> str:
    return "".join("1" if v else "0" for v in values)


@dataclass(frozen=True)
class EpistemicModel:
    registry: tuple[Atom, ...]
    agents: tuple[str, ...]
    worlds: tuple[World, ...]
    rank: Mapping[str, Mapping[str, int]]          # agent -> world id -> rank
    cells: Mapping[str, Mapping[str, object]]      # agent -> world id -> cell key
    awareness: Mapping[str, frozenset[str]]        # agent -> canonical formula keys
    inconsistent: bool = False

    def __post_init__(self):
        # Lookup caches; models are immutable so these never go stale.
        object.__setattr__(self, "_index", {a.id: i for i, a in enumerate(self.registry)})
        object.__setattr__(self, "_by_id", {w.id: w for w in self.worlds})
        members: dict[str, dict[object, list[World]]] = {}
        for ag in self.agents:
            cs = self.cells[ag]
            per: dict[object, list[World]] = {}
            for w in self.worlds:
                per.setdefault(cs[w.id], []).append(w)
            members[ag] = per
        object.__setattr__(self, "_cell_members", members)

    # -- construction -----------------------------------------------------

    @staticmethod
    def build(
        atoms: Sequence[Atom],
        agents: Sequence[str],
        masks: Optional[Mapping[str, Iterable[str]]] = None,
    ) -> "EpistemicModel":
        """Full model over ``atoms``: one world per truth assignment, flat ranks.

        ``masks`` maps an agent to the atoms it can observe; worlds agreeing on
        the visible atoms share a cell. Without masks every agent has a single
        cell (public-announcement setting).
        """
        atoms = tuple(atoms)
        ids = [a.id for a in atoms]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate atom ids in registry")
        n = len(atoms)
        worlds = []
        for code in range(2 ** n):
            values = tuple(bool((code >> (n - 1 - i)) & 1) for i in range(n))
            worlds.append(World(_bits(values), values))
        worlds.sort(key=lambda w: w.id)
        rank = {ag: {w.id: 0 for w in worlds} for ag in agents}
        index = {a.id: i for i, a in enumerate(atoms)}
        cells: dict[str, dict[str, object]] = {}
        for ag in agents:
            if masks and ag in masks:
                vis = [index[x] for x in masks[ag]]
                cells[ag] = {w.id: tuple(w.values[i] for i in vis) for w in worlds}
            else:
                cells[ag] = {w.id: 0 for w in worlds}
        awareness = {ag: frozenset(a.id for a in atoms) for ag in agents}
        return EpistemicModel(atoms, tuple(agents), tuple(worlds), rank, cells, awareness)

    # -- lookups -----------------------------------------------------------

    def atom_index(self, atom_id: str) -> int:
        try:
            return self._index[atom_id]
        except KeyError:
            raise UnknownAtom(atom_id) from None

    def atom(self, atom_id: str) -> Atom:
        return self.registry[self.atom_index(atom_id)]

    def has_atom(self, atom_id: str) -> bool:
        return atom_id in self._index

    def world(self, world_id: str) -> World:
        try:
            return self._by_id[world_id]
        except KeyError:
            raise UnknownWorld(world_id) from None

    def world_matching(self, assignment: Mapping[str, bool]) -> Optional[str]:
        """Id of the unique world agreeing with ``assignment`` on its atoms."""
        idx = {a: self.atom_index(a) for a in assignment if self.has_atom(a)}
        hits = [
            w.id
            for w in self.worlds
            if all(w.values[i] == assignment[a] for a, i in idx.items())
        ]
        return hits[0] if len(hits) == 1 else None

    def cell_of(self, agent: str, world_id: str) -> list[World]:
        key = self.cells[agent][world_id]
        return self._cell_members[agent][key]

    def min_worlds(self, agent: str, cell: Sequence[World]) -> list[World]:
        ranks = self.rank[agent]
        m = min(ranks[w.id] for w in cell)
        return [w for w in cell if ranks[w.id] == m]

    # -- evaluation --------------------------------------------------------

    def eval(self, world_id: str, phi: Formula) -> bool:
        """Truth of ``phi`` at a world, per the recursive semantics."""
        w = self.world(world_id)
        return self._eval(w, phi)

    def _eval(self, w: World, phi: Formula) -> bool:
        if isinstance(phi, AtomRef):
            return w.values[self.atom_index(phi.atom)]
        if isinstance(phi, Const):
            return phi.value
        if isinstance(phi, Not):
            return not self._eval(w, phi.sub)
        if isinstance(phi, And):
            return all(self._eval(w, p) for p in phi.parts)
        if isinstance(phi, Or):
            return any(self._eval(w, p) for p in phi.parts)
        if isinstance(phi, Implies):
            return (not self._eval(w, phi.antecedent)) or self._eval(w, phi.consequent)
        if isinstance(phi, Knows):
            return all(self._eval(v, phi.sub) for v in self.cell_of(phi.agent, w.id))
        if isinstance(phi, Believes):
            cell = self.cell_of(phi.agent, w.id)
            return all(self._eval(v, phi.sub) for v in self.min_worlds(phi.agent, cell))
        if isinstance(phi, Aware):
            return phi.sub.canonical().key() in self.awareness.get(phi.agent, frozenset())
        if isinstance(phi, Common):
            return self._eval_common(w, phi)
        raise TypeError(f"cannot evaluate {phi!r}")

    def _eval_common(self, w: World, phi: Common) -> bool:
        # Truth at every world reachable through the agents' cells.
        seen = {w.id}
        frontier = [w]
        while frontier:
            cur = frontier.pop()
            if not self._eval(cur, phi.sub):
                return False
            for ag in phi.agents:
                for v in self.cell_of(ag, cur.id):
                    if v.id not in seen:
                        seen.add(v.id)
                        frontier.append(v)
        return True

    def believes(self, agent: str, phi: Formula, world_id: Optional[str] = None) -> bool:
        """Belief, evaluated at ``world_id`` or at the first world (public cells
        make the choice irrelevant)."""
        if not self.worlds:
            return False
        wid = world_id if world_id is not None else self.worlds[0].id
        return self.eval(wid, Believes(agent, phi))

    # -- updates -----------------------------------------------------------

    def _satisfying(self, psi: Formula) -> set[str]:
        return {w.id for w in self.worlds if self._eval(w, psi)}

    def _restrict(self, keep: set[str]) -> "EpistemicModel":
        worlds = tuple(w for w in self.worlds if w.id in keep)
        rank = {ag: {i: r for i, r in rs.items() if i in keep} for ag, rs in self.rank.items()}
        cells = {ag: {i: c for i, c in cs.items() if i in keep} for ag, cs in self.cells.items()}
        return replace(self, worlds=worlds, rank=rank, cells=cells,
                       inconsistent=not worlds)

    def announce_hard(self, psi: Formula) -> "EpistemicModel":
        """Public announcement: keep exactly the worlds where ``psi`` held
        (evaluated in this, pre-update, model). An empty result is returned as
        a flagged model, never raised."""
        return self._restrict(self._satisfying(psi))

    def announce_joint(self, psis: Sequence[Formula]) -> "EpistemicModel":
        """Simultaneous announcement round: every formula is evaluated against
        this model and the surviving worlds are those satisfying all of them."""
        keep = set(w.id for w in self.worlds)
        for psi in psis:
            keep &= self._satisfying(psi)
        return self._restrict(keep)

    def _rerank(self, agent: str, keyfn) -> dict[str, int]:
        """Dense ranks per cell from a sort key; equal keys keep equal ranks."""
        old = self.rank[agent]
        out: dict[str, int] = {}
        by_cell: dict[object, list[World]] = {}
        for w in self.worlds:
            by_cell.setdefault(self.cells[agent][w.id], []).append(w)
        for members in by_cell.values():
            keyed = sorted(members, key=lambda w: keyfn(w, old[w.id]))
            nxt = -1
            prev = None
            for w in keyed:
                k = keyfn(w, old[w.id])
                if k != prev:
                    nxt += 1
                    prev = k
                out[w.id] = nxt
        return out

    def upgrade_lexicographic(self, psi: Formula) -> "EpistemicModel":
        """Soft radical upgrade: within each cell every psi-world becomes
        strictly more plausible than every non-psi-world; order inside each
        side is preserved. The world set never changes."""
        sat = self._satisfying(psi)
        rank = {
            ag: self._rerank(ag, lambda w, r, s=sat: (w.id not in s, r))
            for ag in self.agents
        }
        return replace(self, rank=rank)

    def upgrade_conservative(self, psi: Formula) -> "EpistemicModel":
        """Soft minimal upgrade: per cell, the most plausible psi-worlds (all
        of them on ties) move strictly below everything else; comparisons not
        involving the promoted worlds are preserved. Cells with no psi-world
        are left unchanged."""
        sat = self._satisfying(psi)
        rank: dict[str, dict[str, int]] = {}
        for ag in self.agents:
            old = self.rank[ag]
            promoted: set[str] = set()
            by_cell: dict[object, list[str]] = {}
            for w in self.worlds:
                by_cell.setdefault(self.cells[ag][w.id], []).append(w.id)
            for members in by_cell.values():
                hits = [i for i in members if i in sat]
                if not hits:
                    continue
                m = min(old[i] for i in hits)
                promoted.update(i for i in hits if old[i] == m)
            rank[ag] = self._rerank(
                ag, lambda w, r, p=promoted: (0, 0) if w.id in p else (1, r)
            )
        return replace(self, rank=rank)

    def expand_awareness(self, agents: Iterable[str], atom: Atom) -> "EpistemicModel":
        """Register ``atom`` (splitting every world into a false/true twin) and
        add it to the listed agents' awareness. Raises NoOpExpansion when the
        atom is already registered and known to all listed agents."""
        agents = tuple(agents)
        ref_key = AtomRef(atom.id).key()
        if self.has_atom(atom.id):
            missing = [ag for ag in agents if ref_key not in self.awareness.get(ag, frozenset())]
            if not missing:
                raise NoOpExpansion(atom.id)
            awareness = dict(self.awareness)
            for ag in missing:
                awareness[ag] = awareness.get(ag, frozenset()) | {ref_key}
            return replace(self, awareness=awareness)

        registry = self.registry + (atom,)
        worlds = []
        rank = {ag: {} for ag in self.agents}
        cells = {ag: {} for ag in self.agents}
        for w in self.worlds:
            for bit in (False, True):
                nid = w.id + ("1" if bit else "0")
                worlds.append(World(nid, w.values + (bit,)))
                for ag in self.agents:
                    rank[ag][nid] = self.rank[ag][w.id]
                    cells[ag][nid] = self.cells[ag][w.id]
        awareness = dict(self.awareness)
        for ag in agents:
            awareness[ag] = awareness.get(ag, frozenset()) | {ref_key}
        return replace(self, registry=registry, worlds=tuple(worlds),
                       rank=rank, cells=cells, awareness=awareness)


@dataclass(frozen=True)
class AbductionVerdict:
    accepted: bool
    reason: str = ""


def check_abductive_solution(
    model: EpistemicModel,
    world_id: str,
    agent: str,
    chi: Formula,
    gamma: Formula,
) -> AbductionVerdict:
    """Check the three abductive-solution conditions for candidate ``gamma``
    against surprising observation ``chi``; the reason names the first failing
    condition."""
    if model.eval(world_id, Believes(agent, Not(gamma))):
        return AbductionVerdict(False, "consistency")
    upgraded = model.upgrade_lexicographic(gamma)
    if not upgraded.eval(world_id, Believes(agent, chi)):
        return AbductionVerdict(False, "explanatory")
    if gamma.canonical().key() == chi.canonical().key():
        return AbductionVerdict(False, "non-triviality")
    if model.eval(world_id, Believes(agent, gamma)):
        return AbductionVerdict(False, "non-triviality")
    if isinstance(gamma.canonical(), Const):
        return AbductionVerdict(False, "non-triviality")
    return AbductionVerdict(True)
