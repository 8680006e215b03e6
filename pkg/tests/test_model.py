"""Epistemic model semantics and update operators."""

from __future__ import annotations

import random

import pytest

from groundcheck.formulas import (
    And,
    AtomRef,
    Aware,
    Believes,
    Common,
    Knows,
    Not,
    Or,
)
from groundcheck.model import (
    Atom,
    EpistemicModel,
    NoOpExpansion,
    UnknownAtom,
    UnknownWorld,
    check_abductive_solution,
)

from helpers import (
    brute_believes,
    brute_knows,
    muddy_model,
    muddy_world,
    random_model,
    random_modal_formula,
    random_prop_formula,
)


def not_knows_own(agent: str) -> Not:
    m = AtomRef(f"m_{agent}")
    return Not(Or([Knows(agent, m), Knows(agent, Not(m))]))


class TestEvalFormula:
    def test_alice_sees_bob_muddy(self):
        m0 = muddy_model()
        mmc = muddy_world(m0, True, True, False)
        assert m0.eval(mmc, Knows("a", AtomRef("m_b")))
        # but not her own forehead
        assert not m0.eval(mmc, Knows("a", AtomRef("m_a")))

    def test_tautology(self):
        m0 = muddy_model()
        phi = Or([AtomRef("m_a"), Not(AtomRef("m_a"))])
        for w in m0.worlds:
            assert m0.eval(w.id, phi)

    def test_alice_knows_after_round(self):
        # Third example of the eval contract: after the announcement and one
        # "nobody knows" round, Alice's cell at MMC collapses to a singleton.
        m0 = muddy_model()
        m1 = m0.announce_hard(Or([AtomRef("m_a"), AtomRef("m_b"), AtomRef("m_c")]))
        m2 = m1.announce_joint([not_knows_own(x) for x in "abc"])
        mmc = muddy_world(m2, True, True, False)
        assert m2.cell_of("a", mmc) == [m2.world(mmc)]
        assert m2.eval(mmc, Knows("a", AtomRef("m_a")))
        # Carol cannot distinguish MMC from MMM yet.
        assert not m2.eval(mmc, Knows("c", Not(AtomRef("m_c"))))

    def test_unknown_atom_raises(self):
        m0 = muddy_model()
        with pytest.raises(UnknownAtom):
            m0.eval(m0.worlds[0].id, AtomRef("nope"))

    def test_unknown_world_raises(self):
        m0 = muddy_model()
        with pytest.raises(UnknownWorld):
            m0.eval("zzz", AtomRef("m_a"))

    def test_awareness_is_syntactic_membership(self):
        m0 = muddy_model()
        w = m0.worlds[0].id
        assert m0.eval(w, Aware("a", AtomRef("m_a")))
        assert not m0.eval(w, Aware("a", And([AtomRef("m_a"), AtomRef("m_b")])))

    def test_knows_believes_against_brute_force(self):
        rng = random.Random(7)
        for _ in range(500):
            model = random_model(rng)
            atom_ids = [a.id for a in model.registry]
            agent = rng.choice(model.agents)
            w = rng.choice(model.worlds).id
            phi = random_modal_formula(rng, atom_ids, list(model.agents))
            assert model.eval(w, Knows(agent, phi)) == brute_knows(model, agent, w, phi)
            assert model.eval(w, Believes(agent, phi)) == brute_believes(model, agent, w, phi)


class TestAnnounceHard:
    def test_father_announcement_leaves_seven_worlds(self):
        m0 = muddy_model()
        assert len(m0.worlds) == 8
        m1 = m0.announce_hard(Or([AtomRef("m_a"), AtomRef("m_b"), AtomRef("m_c")]))
        assert len(m1.worlds) == 7

    def test_top_announcement_is_identity(self):
        m0 = muddy_model()
        m1 = m0.announce_hard(Or([AtomRef("m_a"), Not(AtomRef("m_a"))]))
        assert [w.id for w in m1.worlds] == [w.id for w in m0.worlds]

    def test_nobody_knows_round_leaves_four_worlds(self):
        m0 = muddy_model()
        m1 = m0.announce_hard(Or([AtomRef("m_a"), AtomRef("m_b"), AtomRef("m_c")]))
        m2 = m1.announce_joint([not_knows_own(x) for x in "abc"])
        ids = {w.id for w in m2.worlds}
        expected = {
            muddy_world(m0, True, True, True),
            muddy_world(m0, True, True, False),
            muddy_world(m0, True, False, True),
            muddy_world(m0, False, True, True),
        }
        assert ids == expected

    def test_inconsistent_announcement_is_flagged(self):
        m0 = muddy_model()
        out = m0.announce_hard(And([AtomRef("m_a"), Not(AtomRef("m_a"))]))
        assert out.inconsistent
        assert not out.worlds

    def test_propositional_announcement_becomes_common_knowledge(self):
        rng = random.Random(11)
        checked = 0
        for _ in range(500):
            model = random_model(rng)
            psi = random_prop_formula(rng, [a.id for a in model.registry])
            out = model.announce_hard(psi)
            if not out.worlds:
                continue
            checked += 1
            w = rng.choice(out.worlds).id
            assert out.eval(w, Common(list(model.agents), psi))
        assert checked > 300


def ranks_of(model, agent):
    return {w.id: model.rank[agent][w.id] for w in model.worlds}


def single_cell_model(ranks: list[int]) -> EpistemicModel:
    base = EpistemicModel.build([Atom("p"), Atom("q")], ["x"])
    worlds = base.worlds[: len(ranks)]
    rank = {"x": {w.id: r for w, r in zip(worlds, ranks)}}
    cells = {"x": {w.id: 0 for w in worlds}}
    return EpistemicModel(base.registry, base.agents, worlds, rank, cells,
                          base.awareness)


class TestUpgrades:
    def test_lexicographic_strict_separation(self):
        rng = random.Random(23)
        for _ in range(500):
            model = random_model(rng)
            psi = random_prop_formula(rng, [a.id for a in model.registry])
            out = model.upgrade_lexicographic(psi)
            assert {w.id for w in out.worlds} == {w.id for w in model.worlds}
            sat = {w.id for w in model.worlds if model.eval(w.id, psi)}
            for ag in model.agents:
                for w1 in out.worlds:
                    for w2 in out.worlds:
                        if model.cells[ag][w1.id] != model.cells[ag][w2.id]:
                            continue
                        r1, r2 = out.rank[ag][w1.id], out.rank[ag][w2.id]
                        o1, o2 = model.rank[ag][w1.id], model.rank[ag][w2.id]
                        if w1.id in sat and w2.id not in sat:
                            assert r1 < r2
                        elif (w1.id in sat) == (w2.id in sat):
                            # within one side the old comparisons survive
                            assert (o1 < o2) == (r1 < r2) and (o1 == o2) == (r1 == r2)

    def test_lexicographic_promotes_last_world(self):
        model = single_cell_model([0, 1, 2])
        target = model.worlds[2]
        out = model.upgrade_lexicographic(AtomRef("p") if target.values[0] else Not(AtomRef("p")))
        # expected ordering derived by enumerating all strict orders that
        # satisfy "psi-worlds first, sides keep their internal order"
        ranks = ranks_of(out, "x")
        others = [w for w in model.worlds if w.id != target.id]
        assert ranks[target.id] < min(ranks[w.id] for w in others)
        assert ranks[others[0].id] < ranks[others[1].id]

    def test_lexicographic_degenerate_partition(self):
        model = single_cell_model([0, 1, 2])
        out = model.upgrade_lexicographic(Or([AtomRef("p"), Not(AtomRef("p"))]))
        before = ranks_of(model, "x")
        after = ranks_of(out, "x")
        for w1 in model.worlds:
            for w2 in model.worlds:
                assert (before[w1.id] < before[w2.id]) == (after[w1.id] < after[w2.id])

    def test_conservative_promotes_only_minimal_psi_world(self):
        # worlds: p&q(11), p&!q(10), !p&q(01) with ranks 0,1,2; psi = ranks 1,2
        base = EpistemicModel.build([Atom("p"), Atom("q")], ["x"])
        w11 = base.world_matching({"p": True, "q": True})
        w10 = base.world_matching({"p": True, "q": False})
        w01 = base.world_matching({"p": False, "q": True})
        worlds = tuple(w for w in base.worlds if w.id in (w11, w10, w01))
        rank = {"x": {w11: 0, w10: 1, w01: 2}}
        cells = {"x": {w.id: 0 for w in worlds}}
        model = EpistemicModel(base.registry, base.agents, worlds, rank, cells, base.awareness)
        # psi true exactly at w10 (rank 1) and w01 (rank 2)
        psi = Or([And([AtomRef("p"), Not(AtomRef("q"))]),
                  And([Not(AtomRef("p")), AtomRef("q")])])
        out = model.upgrade_conservative(psi)
        ranks = ranks_of(out, "x")
        assert ranks[w10] < ranks[w11] < ranks[w01]

    def test_conservative_idempotent_when_psi_on_top(self):
        model = single_cell_model([0, 1, 2])
        top = model.worlds[0]
        psi = AtomRef("p") if top.values[0] else Not(AtomRef("p"))
        # make psi uniquely most plausible first
        lifted = model.upgrade_lexicographic(psi)
        out = lifted.upgrade_conservative(psi)
        b, a = ranks_of(lifted, "x"), ranks_of(out, "x")
        for w1 in model.worlds:
            for w2 in model.worlds:
                assert (b[w1.id] < b[w2.id]) == (a[w1.id] < a[w2.id])

    def test_conservative_preserves_unpromoted_comparisons(self):
        rng = random.Random(31)
        for _ in range(500):
            model = random_model(rng)
            psi = random_prop_formula(rng, [a.id for a in model.registry])
            sat = {w.id for w in model.worlds if model.eval(w.id, psi)}
            out = model.upgrade_conservative(psi)
            for ag in model.agents:
                promoted = set()
                cells: dict[object, list] = {}
                for w in model.worlds:
                    cells.setdefault(model.cells[ag][w.id], []).append(w.id)
                for members in cells.values():
                    hits = [i for i in members if i in sat]
                    if not hits:
                        continue
                    best = min(model.rank[ag][i] for i in hits)
                    promoted |= {i for i in hits if model.rank[ag][i] == best}
                for members in cells.values():
                    for w1 in members:
                        for w2 in members:
                            if w1 in promoted or w2 in promoted:
                                continue
                            o = model.rank[ag]
                            n = out.rank[ag]
                            assert (o[w1] < o[w2]) == (n[w1] < n[w2])
                    for w1 in members:
                        if w1 not in promoted:
                            continue
                        for w2 in members:
                            if w2 not in promoted:
                                assert out.rank[ag][w1] < out.rank[ag][w2]


class TestExpandAwareness:
    def test_fresh_atom_doubles_and_preserves(self):
        model = single_cell_model([0, 1, 2])
        out = model.expand_awareness(["x"], Atom("r"))
        assert len(out.worlds) == 2 * len(model.worlds)
        # complementary twins with equal ranks
        for w in model.worlds:
            twins = [v for v in out.worlds if v.id.startswith(w.id)]
            assert len(twins) == 2
            assert {v.values[-1] for v in twins} == {True, False}
            assert {out.rank["x"][v.id] for v in twins} == {model.rank["x"][w.id]}

    def test_single_world_expansion(self):
        base = EpistemicModel.build([Atom("p")], ["x"])
        model = base.announce_hard(AtomRef("p"))
        assert len(model.worlds) == 1
        out = model.expand_awareness(["x"], Atom("q"))
        assert len(out.worlds) == 2
        vals = sorted(w.values[-1] for w in out.worlds)
        assert vals == [False, True]

    def test_noop_expansion_rejected(self):
        model = muddy_model()
        with pytest.raises(NoOpExpansion):
            model.expand_awareness(["a", "b", "c"], Atom("m_a"))

    def test_registered_atom_missing_awareness_is_added_without_split(self):
        model = muddy_model()
        trimmed = {ag: (aw - {"m_c"} if ag == "a" else aw)
                   for ag, aw in model.awareness.items()}
        model = EpistemicModel(model.registry, model.agents, model.worlds,
                               model.rank, model.cells, trimmed)
        out = model.expand_awareness(["a"], Atom("m_c"))
        assert len(out.worlds) == len(model.worlds)
        assert "m_c" in out.awareness["a"]

    def test_expansion_conservative_for_old_formulas(self):
        rng = random.Random(43)
        for _ in range(500):
            model = random_model(rng, max_atoms=4)
            phi = random_modal_formula(rng, [a.id for a in model.registry],
                                       list(model.agents))
            out = model.expand_awareness(list(model.agents), Atom("zz"))
            for w in model.worlds:
                want = model.eval(w.id, phi)
                assert out.eval(w.id + "0", phi) == want
                assert out.eval(w.id + "1", phi) == want

    def test_local_connectedness_after_operations(self):
        rng = random.Random(57)
        for _ in range(200):
            model = random_model(rng)
            psi = random_prop_formula(rng, [a.id for a in model.registry])
            for out in (model.announce_hard(psi),
                        model.upgrade_lexicographic(psi),
                        model.upgrade_conservative(psi),
                        model.expand_awareness(list(model.agents), Atom("zz"))):
                for ag in out.agents:
                    for w in out.worlds:
                        assert w.id in out.rank[ag]
                        assert w.id in out.cells[ag]


class TestAbduction:
    def _two_world(self):
        base = EpistemicModel.build([Atom("chi"), Atom("g")], ["i"])
        return base

    def test_accept_when_all_conditions_hold(self):
        model = self._two_world().announce_hard(AtomRef("chi"))
        w = model.world_matching({"chi": True, "g": True})
        verdict = check_abductive_solution(model, w, "i", AtomRef("chi"), AtomRef("g"))
        assert verdict.accepted

    def test_reject_gamma_equals_chi(self):
        model = self._two_world()
        w = model.worlds[0].id
        verdict = check_abductive_solution(model, w, "i", AtomRef("chi"), AtomRef("chi"))
        assert not verdict.accepted and verdict.reason == "non-triviality"

    def test_reject_already_believed(self):
        # build a model where g holds at every minimal world
        model = self._two_world().upgrade_lexicographic(AtomRef("g"))
        model = model.announce_hard(AtomRef("chi"))
        w = model.world_matching({"chi": True, "g": True})
        assert model.eval(w, Believes("i", AtomRef("g")))
        verdict = check_abductive_solution(model, w, "i", AtomRef("chi"), AtomRef("g"))
        assert not verdict.accepted and verdict.reason == "non-triviality"

    def test_reject_inconsistent_candidate(self):
        model = self._two_world().announce_hard(Not(AtomRef("g")))
        w = model.worlds[0].id
        verdict = check_abductive_solution(model, w, "i", AtomRef("chi"), AtomRef("g"))
        assert not verdict.accepted and verdict.reason == "consistency"

    def test_reject_top(self):
        from groundcheck.formulas import TOP
        model = self._two_world().announce_hard(AtomRef("chi"))
        w = model.worlds[0].id
        verdict = check_abductive_solution(model, w, "i", AtomRef("chi"), TOP)
        assert not verdict.accepted and verdict.reason == "non-triviality"
