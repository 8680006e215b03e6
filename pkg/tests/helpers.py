"""Shared test utilities: random model/formula generators and independent
oracles for the modal semantics."""

from __future__ import annotations

import random

from groundcheck.formulas import (
    And,
    AtomRef,
    Believes,
    Common,
    Formula,
    Implies,
    Knows,
    Not,
    Or,
)
from groundcheck.model import Atom, EpistemicModel


def random_model(rng: random.Random, max_atoms: int = 6, max_agents: int = 4,
                 max_rank: int = 3) -> EpistemicModel:
    """A random model: full world set, random cell partition, random ranks."""
    n_atoms = rng.randint(1, max_atoms)
    n_agents = rng.randint(1, max_agents)
    atoms = [Atom(f"p{i}") for i in range(n_atoms)]
    agents = [f"ag{i}" for i in range(n_agents)]
    base = EpistemicModel.build(atoms, agents)
    # Re-deal cells and ranks: each agent gets a random partition into at most
    # three blocks and independent random ranks.
    cells = {}
    rank = {}
    for ag in agents:
        blocks = rng.randint(1, min(3, len(base.worlds)))
        cells[ag] = {w.id: rng.randrange(blocks) for w in base.worlds}
        rank[ag] = {w.id: rng.randint(0, max_rank) for w in base.worlds}
    return EpistemicModel(base.registry, base.agents, base.worlds, rank, cells,
                          base.awareness)


def random_prop_formula(rng: random.Random, atom_ids, depth: int = 3) -> Formula:
    if depth == 0 or rng.random() < 0.35:
        return AtomRef(rng.choice(atom_ids))
    pick = rng.randrange(4)
    if pick == 0:
        return Not(random_prop_formula(rng, atom_ids, depth - 1))
    if pick == 1:
        return And([random_prop_formula(rng, atom_ids, depth - 1)
                    for _ in range(rng.randint(2, 3))])
    if pick == 2:
        return Or([random_prop_formula(rng, atom_ids, depth - 1)
                   for _ in range(rng.randint(2, 3))])
    return Implies(random_prop_formula(rng, atom_ids, depth - 1),
                   random_prop_formula(rng, atom_ids, depth - 1))


def random_modal_formula(rng: random.Random, atom_ids, agents, depth: int = 2) -> Formula:
    if depth == 0 or rng.random() < 0.4:
        return random_prop_formula(rng, atom_ids, 2)
    pick = rng.randrange(3)
    sub = random_modal_formula(rng, atom_ids, agents, depth - 1)
    if pick == 0:
        return Knows(rng.choice(agents), sub)
    if pick == 1:
        return Believes(rng.choice(agents), sub)
    group = rng.sample(agents, rng.randint(1, len(agents)))
    return Common(group, sub)


# -- independent semantics oracle -------------------------------------------

def brute_cell(model: EpistemicModel, agent: str, world_id: str):
    key = model.cells[agent][world_id]
    return [w for w in model.worlds if model.cells[agent][w.id] == key]


def brute_knows(model: EpistemicModel, agent: str, world_id: str, phi) -> bool:
    return all(model.eval(w.id, phi) for w in brute_cell(model, agent, world_id))


def brute_believes(model: EpistemicModel, agent: str, world_id: str, phi) -> bool:
    cell = brute_cell(model, agent, world_id)
    best = min(model.rank[agent][w.id] for w in cell)
    return all(model.eval(w.id, phi) for w in cell
               if model.rank[agent][w.id] == best)


def muddy_model() -> EpistemicModel:
    """Three children, each sees the others' foreheads but not their own."""
    atoms = [Atom("m_a"), Atom("m_b"), Atom("m_c")]
    masks = {
        "a": ["m_b", "m_c"],
        "b": ["m_a", "m_c"],
        "c": ["m_a", "m_b"],
    }
    return EpistemicModel.build(atoms, ["a", "b", "c"], masks=masks)


def muddy_world(model: EpistemicModel, m_a: bool, m_b: bool, m_c: bool) -> str:
    wid = model.world_matching({"m_a": m_a, "m_b": m_b, "m_c": m_c})
    assert wid is not None
    return wid
