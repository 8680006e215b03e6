"""Scenario data model, the muddy-children generator, replay, counterfactuals.

Scenario documents are JSON (schema shipped at ``schemas/scenario.json``,
``"format": 1``). Replay drives the engine turn by turn with the gold
operation labels, evaluates the per-turn expectations where declared, then
runs the counterfactual retraction queries against the final structure. A
replay never aborts on a mismatch; it records and continues.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from math import comb
from typing import Mapping, Optional, Sequence

import jsonschema

from .engine import (
    DependencyStructure,
    Mismatch,
    OpKind,
    PreconditionError,
    TurnOperation,
    apply_turn,
    diff_expected,
    snapshot,
    structure_retract,
    surprise_scan,
)
from .formulas import AtomRef, Believes, Formula, Knows, Not, Or, formula_from_json
from .model import Atom, EpistemicModel


class ValidationError(ValueError):
    """Scenario document rejected; the message carries the failing path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvalidCounts(ValueError):
    pass


@dataclass(frozen=True)
class SurpriseSpec:
    agent: str
    chi: Formula


@dataclass(frozen=True)
class Turn:
    id: str
    speaker: str
    text: str
    ops: tuple[TurnOperation, ...]
    simultaneous: bool = False
    surprise_scans: tuple[SurpriseSpec, ...] = ()
    expect: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class Counterfactual:
    retract: str
    mode: str = "direct"
    expect_affected: tuple[str, ...] = ()
    expect_unaffected: tuple[str, ...] = ()
    expect_reinstated: tuple[str, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    agents: tuple[str, ...]
    atoms: tuple[Atom, ...]
    turns: tuple[Turn, ...]
    public: bool = True
    masks: Optional[Mapping[str, tuple[str, ...]]] = None
    actual: Optional[Mapping[str, bool]] = None
    authority: tuple[str, ...] = ()
    roles: Mapping[str, str] = field(default_factory=dict)
    counterfactuals: tuple[Counterfactual, ...] = ()
    description: str = ""

    def initial_structure(self) -> DependencyStructure:
        model = EpistemicModel.build(self.atoms, self.agents, masks=self.masks)
        return DependencyStructure.initial(model, actual=self.actual,
                                           authority=self.authority)

    def to_json(self) -> dict:
        doc: dict = {
            "format": 1,
            "name": self.name,
            "agents": list(self.agents),
            "atoms": [
                {"id": a.id, "kind": a.kind, **({"label": a.label} if a.label else {})}
                for a in self.atoms
            ],
            "turns": [],
        }
        if self.description:
            doc["description"] = self.description
        if self.roles:
            doc["roles"] = dict(self.roles)
        if self.authority:
            doc["authority"] = list(self.authority)
        if self.masks is not None:
            doc["masks"] = {ag: list(v) for ag, v in self.masks.items()}
        else:
            doc["public"] = True
        if self.actual is not None:
            doc["actual"] = dict(self.actual)
        for t in self.turns:
            entry: dict = {"id": t.id, "speaker": t.speaker,
                           "ops": [o.to_json() for o in t.ops]}
            if t.text:
                entry["text"] = t.text
            if t.simultaneous:
                entry["simultaneous"] = True
            if t.surprise_scans:
                entry["surprise_scans"] = [
                    {"agent": s.agent, "chi": s.chi.to_json()} for s in t.surprise_scans
                ]
            if t.expect:
                entry["expect"] = dict(t.expect)
            doc["turns"].append(entry)
        if self.counterfactuals:
            doc["counterfactuals"] = [
                {
                    "retract": c.retract,
                    "mode": c.mode,
                    "expect_affected": list(c.expect_affected),
                    "expect_unaffected": list(c.expect_unaffected),
                    **({"expect_reinstated": list(c.expect_reinstated)}
                       if c.expect_reinstated else {}),
                }
                for c in self.counterfactuals
            ]
        return doc


def _schema() -> dict:
    text = resources.files("groundcheck.schemas").joinpath("scenario.json").read_text()
    return json.loads(text)


def load_scenario(doc) -> Scenario:
    """Validate a scenario document and build the Scenario value."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(path, exc.message) from exc
    atoms = tuple(
        Atom(a["id"], a.get("kind", "observable"), a.get("label", ""))
        for a in doc["atoms"]
    )
    turns = []
    for t in doc["turns"]:
        ops = tuple(TurnOperation.from_json(o) for o in t["ops"])
        scans = tuple(
            SurpriseSpec(s["agent"], formula_from_json(s["chi"]))
            for s in t.get("surprise_scans", ())
        )
        turns.append(Turn(
            id=t["id"],
            speaker=t.get("speaker", ops[0].speaker),
            text=t.get("text", ""),
            ops=ops,
            simultaneous=t.get("simultaneous", False),
            surprise_scans=scans,
            expect=t.get("expect", {}),
        ))
    masks = doc.get("masks")
    counterfactuals = tuple(
        Counterfactual(
            retract=c["retract"],
            mode=c.get("mode", "direct"),
            expect_affected=tuple(c.get("expect_affected", ())),
            expect_unaffected=tuple(c.get("expect_unaffected", ())),
            expect_reinstated=tuple(c.get("expect_reinstated", ())),
        )
        for c in doc.get("counterfactuals", ())
    )
    return Scenario(
        name=doc["name"],
        agents=tuple(doc["agents"]),
        atoms=atoms,
        turns=tuple(turns),
        public=doc.get("public", masks is None),
        masks={ag: tuple(v) for ag, v in masks.items()} if masks else None,
        actual=doc.get("actual"),
        authority=tuple(doc.get("authority", ())),
        roles=doc.get("roles", {}),
        counterfactuals=counterfactuals,
        description=doc.get("description", ""),
    )


def shipped_scenario(name: str) -> Scenario:
    """Load one of the scenario files shipped with the package."""
    stem = name.removesuffix(".json")
    text = resources.files("groundcheck.data").joinpath(f"{stem}.json").read_text()
    return load_scenario(json.loads(text))


# ---------------------------------------------------------------------------
# Muddy children
# ---------------------------------------------------------------------------

def muddy_world_schedule(n: int, muddy: int) -> list[int]:
    """Expected world counts: initial, after the opening announcement, after
    each "nobody knows" round, after the resolution round."""
    counts = [2 ** n, 2 ** n - 1]
    for r in range(1, muddy):
        counts.append(2 ** n - sum(comb(n, k) for k in range(r + 1)))
    counts.append(1)
    return counts


def gen_muddy(n: int, muddy: Sequence[str]) -> Scenario:
    """The classic puzzle as a scenario: n children, the named ones muddy.

    One announcement turn, |muddy|-1 simultaneous "I don't know" rounds, then
    a resolution round in which muddy children go first (the clean ones can
    only conclude after hearing them).
    """
    names = [chr(ord("a") + i) for i in range(n)]
    muddy_set = set(muddy)
    if not (1 <= len(muddy_set) <= n <= 10) or not muddy_set <= set(names):
        raise InvalidCounts(f"n={n}, muddy={sorted(muddy_set)}")
    atoms = tuple(Atom(f"m_{c}", "observable", f"{c} is muddy") for c in names)
    agents = tuple(names) + ("father",)
    masks = {c: tuple(f"m_{x}" for x in names if x != c) for c in names}
    masks["father"] = tuple(a.id for a in atoms)
    actual = {f"m_{c}": c in muddy_set for c in names}
    at_least_one = Or([AtomRef(a.id) for a in atoms])
    schedule = muddy_world_schedule(n, len(muddy_set))

    turns = [Turn(
        id="T0",
        speaker="father",
        text="I can see that at least one of you has mud on your forehead.",
        ops=(
            TurnOperation(kind=OpKind.OBSERVE, speaker="father", statement=at_least_one),
            TurnOperation(kind=OpKind.QUESTION, speaker="father", statement=at_least_one),
        ),
        expect={"world_count": schedule[1]},
    )]

    def idk(child: str) -> Formula:
        m = AtomRef(f"m_{child}")
        return Not(Or([Knows(child, m), Knows(child, Not(m))]))

    for r in range(1, len(muddy_set)):
        turns.append(Turn(
            id=f"T{r}",
            speaker="all",
            text="I don't know.",
            simultaneous=True,
            ops=tuple(
                TurnOperation(kind=OpKind.OBSERVE, speaker=c, statement=idk(c))
                for c in names
            ),
            expect={"world_count": schedule[1 + r]},
        ))
    order = [c for c in names if c in muddy_set] + [c for c in names if c not in muddy_set]
    resolve_ops = []
    for c in order:
        is_muddy = c in muddy_set
        m = AtomRef(f"m_{c}")
        resolve_ops.append(TurnOperation(
            kind=OpKind.RESOLVE,
            speaker=c,
            claim=f"m_{c}",
            claim_value=is_muddy,
            statement=Knows(c, m if is_muddy else Not(m)),
            arg_id=f"res_m_{c}",
        ))
    turns.append(Turn(
        id=f"T{len(muddy_set)}",
        speaker="all",
        text="I know whether I am muddy.",
        ops=tuple(resolve_ops),
        expect={"world_count": 1},
    ))
    return Scenario(
        name=f"muddy_{n}_{''.join(sorted(muddy_set))}",
        agents=agents,
        atoms=atoms,
        turns=tuple(turns),
        public=False,
        masks=masks,
        actual=actual,
        description=f"Muddy children, n={n}, muddy={sorted(muddy_set)}.",
    )


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TurnResult:
    turn_id: str
    ok: bool
    mismatches: tuple[Mismatch, ...]
    world_count: int
    wall_ms: float
    engine_turns: tuple[int, int] = (0, 0)   # inclusive span of apply counters
    error: str = ""


@dataclass(frozen=True)
class CounterfactualResult:
    retract: str
    ok: bool
    affected: tuple[str, ...]
    missing_affected: tuple[str, ...]
    unexpected_affected: tuple[str, ...]
    missing_reinstated: tuple[str, ...]
    reinstated: tuple[str, ...]


@dataclass(frozen=True)
class ReplayReport:
    scenario: str
    turns: tuple[TurnResult, ...]
    counterfactuals: tuple[CounterfactualResult, ...]
    world_counts: tuple[int, ...]        # initial, then one entry per turn

    @property
    def ok(self) -> bool:
        return all(t.ok for t in self.turns) and all(c.ok for c in self.counterfactuals)

    def to_json(self, include_timing: bool = False) -> dict:
        """Canonical form excludes wall times so reruns are byte-identical."""
        doc = {
            "scenario": self.scenario,
            "ok": self.ok,
            "world_counts": list(self.world_counts),
            "turns": [
                {
                    "id": t.turn_id,
                    "ok": t.ok,
                    "world_count": t.world_count,
                    "mismatches": [
                        {"path": m.path, "expected": m.expected, "actual": m.actual}
                        for m in t.mismatches
                    ],
                    **({"error": t.error} if t.error else {}),
                    **({"wall_ms": t.wall_ms} if include_timing else {}),
                }
                for t in self.turns
            ],
            "counterfactuals": [
                {
                    "retract": c.retract,
                    "ok": c.ok,
                    "affected": sorted(c.affected),
                    "missing_affected": sorted(c.missing_affected),
                    "unexpected_affected": sorted(c.unexpected_affected),
                    "reinstated": sorted(c.reinstated),
                    "missing_reinstated": sorted(c.missing_reinstated),
                }
                for c in self.counterfactuals
            ],
        }
        return doc

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        lines.append("world counts: " + " ".join(str(c) for c in self.world_counts))
        for t in self.turns:
            mark = "ok" if t.ok else "FAIL"
            lines.append(f"  {t.turn_id}: {mark} (|W|={t.world_count})")
            for m in t.mismatches:
                lines.append(f"    mismatch {m.path}: expected {m.expected!r}, got {m.actual!r}")
            if t.error:
                lines.append(f"    error: {t.error}")
        for c in self.counterfactuals:
            mark = "ok" if c.ok else "FAIL"
            lines.append(f"  retract {c.retract}: {mark} affected={sorted(c.affected)}")
            if c.missing_affected:
                lines.append(f"    missing affected: {sorted(c.missing_affected)}")
            if c.unexpected_affected:
                lines.append(f"    unexpected affected: {sorted(c.unexpected_affected)}")
            if c.missing_reinstated:
                lines.append(f"    missing reinstated: {sorted(c.missing_reinstated)}")
        lines.append("result: " + ("PASS" if self.ok else "FAIL"))
        return "\n".join(lines)


def run_counterfactuals(
    scenario: Scenario, final: DependencyStructure
) -> tuple[CounterfactualResult, ...]:
    out = []
    for query in scenario.counterfactuals:
        report = structure_retract(final, query.retract, mode=query.mode)
        got = set(report.affected)
        missing = tuple(sorted(set(query.expect_affected) - got))
        unexpected = tuple(sorted(set(query.expect_unaffected) & got))
        reinstated = report.reinstated()
        missing_re = tuple(sorted(set(query.expect_reinstated) - reinstated))
        out.append(CounterfactualResult(
            retract=query.retract,
            ok=not missing and not unexpected and not missing_re,
            affected=tuple(sorted(got)),
            missing_affected=missing,
            unexpected_affected=unexpected,
            missing_reinstated=missing_re,
            reinstated=tuple(sorted(reinstated)),
        ))
    return tuple(out)


def _check_believes(d: DependencyStructure, expect: Mapping) -> list[Mismatch]:
    out = []
    for item in expect.get("believes", ()):
        phi = formula_from_json(item["formula"])
        got = d.believed_by(item["agent"], phi)
        if got != item["value"]:
            out.append(Mismatch(
                f"believes.{item['agent']}.{phi.canonical().key()}",
                item["value"], got,
            ))
    return out


def replay(scenario: Scenario, interpreter=None):
    """Replay gold operations turn by turn.

    ``interpreter`` defaults to the scripted one (gold labels as data); any
    object with ``classify(turn_id, utterance, context) -> ClassifiedTurn``
    can stand in. Returns (report, final structure).
    """
    from .interpreter import ScriptedInterpreter

    interp = interpreter or ScriptedInterpreter(scenario)
    d = scenario.initial_structure()
    results = []
    counts = [len(d.model.worlds)]
    for turn in scenario.turns:
        started = time.perf_counter()
        error = ""
        mismatches: list[Mismatch] = []
        first_engine_turn = d.turn + 1
        try:
            for scan in turn.surprise_scans:
                d, _ = surprise_scan(d, scan.chi, scan.agent)
            classified = interp.classify(turn.id, turn.text, "")
            d = apply_turn(classified.operations, d, simultaneous=turn.simultaneous)
        except PreconditionError as exc:
            error = f"precondition: {exc.violation.name} ({exc.violation.detail})"
        wall_ms = (time.perf_counter() - started) * 1000.0
        if turn.expect:
            mismatches = diff_expected(snapshot(d), turn.expect)
            mismatches.extend(_check_believes(d, turn.expect))
        counts.append(len(d.model.worlds))
        results.append(TurnResult(
            turn_id=turn.id,
            ok=not error and not mismatches,
            mismatches=tuple(mismatches),
            world_count=len(d.model.worlds),
            wall_ms=wall_ms,
            engine_turns=(first_engine_turn, d.turn),
            error=error,
        ))
    cf = run_counterfactuals(scenario, d)
    report = ReplayReport(
        scenario=scenario.name,
        turns=tuple(results),
        counterfactuals=cf,
        world_counts=tuple(counts),
    )
    return report, d


# ---------------------------------------------------------------------------
# Grounding test items
# ---------------------------------------------------------------------------

GROUNDING_CATEGORIES = ("actual", "stale", "cross_conversation", "counterfactual")


@dataclass(frozen=True)
class GroundingItem:
    id: str
    category: str
    expected: str                      # grounded | ungrounded
    asserts: Optional[str] = None
    premises: tuple[str, ...] = ()
    text: str = ""
    note: str = ""


def load_grounding_items(doc=None) -> tuple[str, tuple[GroundingItem, ...]]:
    """The grounding test set shipped with the package (or a caller-supplied
    document of the same shape). Returns (scenario name, items)."""
    if doc is None:
        text = resources.files("groundcheck.data").joinpath("grounding_items.json").read_text()
        doc = json.loads(text)
    items = []
    for row in doc["items"]:
        if row["category"] not in GROUNDING_CATEGORIES:
            raise ValidationError(f"items/{row['id']}/category", row["category"])
        items.append(GroundingItem(
            id=row["id"],
            category=row["category"],
            expected=row["expected"],
            asserts=row.get("asserts"),
            premises=tuple(row.get("premises", ())),
            text=row.get("text", ""),
            note=row.get("note", ""),
        ))
    return doc["scenario"], tuple(items)


@dataclass(frozen=True)
class GroundingOutcome:
    item: GroundingItem
    verdict: str
    decision_path: str
    correct: bool


def run_grounding_suite(
    items: Sequence[GroundingItem], d: DependencyStructure
) -> tuple[GroundingOutcome, ...]:
    from .engine import verify_continuation

    out = []
    for item in items:
        res = verify_continuation(d, asserts=item.asserts, premises=item.premises)
        out.append(GroundingOutcome(
            item=item,
            verdict=res.verdict,
            decision_path=res.decision_path,
            correct=res.verdict == item.expected,
        ))
    return tuple(out)


def category_accuracy(outcomes: Sequence[GroundingOutcome]) -> dict[str, float]:
    by_cat: dict[str, list[GroundingOutcome]] = {}
    for o in outcomes:
        by_cat.setdefault(o.item.category, []).append(o)
    return {
        cat: sum(o.correct for o in rows) / len(rows)
        for cat, rows in sorted(by_cat.items())
    }
