"""The per-turn update engine over the four-part dependency structure.

A DependencyStructure bundles the epistemic model, the argumentation
framework, the commitment record and the dependency map behind one turn
counter. ``apply`` routes one classified operation through all four parts at
once; ``check_precondition`` evaluates the operation's gate and returns a
violation value (never raises) so an interpreter loop can re-prompt naming the
failing condition.

Structures are immutable; one writer per conversation, reads are free.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .argumentation import (
    ArgFramework,
    ArgStatus,
    ArgType,
    Argument,
    BadStatusTransition,
    RetractionReport,
    affected as af_affected,
    preferred_extension,
    retract as af_retract,
    walk_deps,
)
from .formulas import And, AtomRef, Believes, Formula, FormulaError, Not, formula_from_json
from .model import Atom, EpistemicModel, check_abductive_solution


class OpKind(str, Enum):
    OBSERVE = "observe"
    HYPOTHESIZE = "hypothesize"
    SUPPORT = "support"
    UNDERMINE = "undermine"
    REVISE = "revise"
    EXPAND_AWARENESS = "expand_awareness"
    RESOLVE = "resolve"
    QUESTION = "question"


@dataclass(frozen=True)
class TurnOperation:
    """One classified update with typed arguments.

    Field usage by kind:
      observe           claim (atom) or statement (compound announcement)
      hypothesize       claim, deps, label/atom_kind for a fresh atom,
                        attacked_by (existing attackers inherited by the new
                        argument)
      support           claim, evidence, specific, rebuts
      undermine         claim, evidence, target (attack target, defaults to
                        the primary claim argument), falsified_prediction
      revise            claim, evidence (optional attacking evidence atom)
      expand_awareness  claim (the atom), atom_kind, label, agents
      resolve           claim, mode, deps, subsumes (argument ids), dissenters,
                        overrules (argument ids attacked by the decision),
                        statement (announcement override), claim_value
      question          statement (the flagged formula)
    """

    kind: OpKind
    speaker: str
    claim: Optional[str] = None
    statement: Optional[Formula] = None
    deps: tuple[str, ...] = ()
    evidence: tuple[str, ...] = ()
    specific: bool = False
    falsified_prediction: Optional[Formula] = None
    target: Optional[str] = None
    rebuts: Optional[str] = None
    subsumes: tuple[str, ...] = ()
    mode: str = "consensual"
    dissenters: tuple[str, ...] = ()
    overrules: tuple[str, ...] = ()
    attacked_by: tuple[str, ...] = ()
    agents: tuple[str, ...] = ()
    atom_kind: str = "observable"
    label: str = ""
    claim_value: bool = True
    arg_id: Optional[str] = None
    turn_text: str = ""

    def to_json(self) -> dict:
        out: dict = {"op": self.kind.value, "speaker": self.speaker}
        if self.claim is not None:
            out["claim"] = self.claim
        if self.statement is not None:
            out["statement"] = self.statement.to_json()
        for key, val in (
            ("deps", list(self.deps)),
            ("evidence", list(self.evidence)),
            ("subsumes", list(self.subsumes)),
            ("dissenters", list(self.dissenters)),
            ("overrules", list(self.overrules)),
            ("attacked_by", list(self.attacked_by)),
            ("agents", list(self.agents)),
        ):
            if val:
                out[key] = val
        if self.specific:
            out["specific"] = True
        if self.falsified_prediction is not None:
            out["falsified_prediction"] = self.falsified_prediction.to_json()
        if self.target:
            out["target"] = self.target
        if self.rebuts:
            out["rebuts"] = self.rebuts
        if self.kind == OpKind.RESOLVE:
            out["mode"] = self.mode
        if self.atom_kind != "observable":
            out["atom_kind"] = self.atom_kind
        if self.label:
            out["label"] = self.label
        if not self.claim_value:
            out["claim_value"] = False
        if self.arg_id:
            out["arg_id"] = self.arg_id
        if self.turn_text:
            out["turn_text"] = self.turn_text
        return out

    @staticmethod
    def from_json(doc: Mapping) -> "TurnOperation":
        try:
            kind = OpKind(doc["op"])
        except (KeyError, ValueError) as exc:
            raise FormulaError(f"bad operation document: {exc}") from exc
        statement = doc.get("statement")
        prediction = doc.get("falsified_prediction")
        return TurnOperation(
            kind=kind,
            speaker=doc.get("speaker", ""),
            claim=doc.get("claim"),
            statement=formula_from_json(statement) if statement is not None else None,
            deps=tuple(doc.get("deps", ())),
            evidence=tuple(doc.get("evidence", ())),
            specific=bool(doc.get("specific", False)),
            falsified_prediction=formula_from_json(prediction) if prediction is not None else None,
            target=doc.get("target"),
            rebuts=doc.get("rebuts"),
            subsumes=tuple(doc.get("subsumes", ())),
            mode=doc.get("mode", "consensual"),
            dissenters=tuple(doc.get("dissenters", ())),
            overrules=tuple(doc.get("overrules", ())),
            attacked_by=tuple(doc.get("attacked_by", ())),
            agents=tuple(doc.get("agents", ())),
            atom_kind=doc.get("atom_kind", "observable"),
            label=doc.get("label", ""),
            claim_value=bool(doc.get("claim_value", True)),
            arg_id=doc.get("arg_id"),
            turn_text=doc.get("turn_text", ""),
        )


@dataclass(frozen=True)
class AbductiveProblem:
    agent: str
    chi: Formula
    status: str = "open"          # open | closed
    closed_by: Optional[str] = None
    opened_turn: int = 0

    def chi_key(self) -> str:
        return self.chi.canonical().key()


@dataclass(frozen=True)
class Violation:
    """A failed precondition, as a value. ``suggested_op`` names the operation
    a re-prompt should steer the classifier toward, when one is implied."""

    name: str
    detail: str = ""
    suggested_op: Optional[OpKind] = None


class PreconditionError(Exception):
    def __init__(self, violation: Violation):
        super().__init__(f"{violation.name}: {violation.detail}")
        self.violation = violation


class NoActualWorld(ValueError):
    """Surprise scanning needs a scenario-declared ground truth."""


@dataclass(frozen=True)
class DependencyStructure:
    turn: int
    model: EpistemicModel
    af: ArgFramework
    cm: Mapping[str, tuple[str, ...]]          # agent -> committed argument ids
    dep: Mapping[str, tuple[str, ...]]         # argument id -> supporting atoms
    queue: tuple[AbductiveProblem, ...] = ()
    actual: Optional[Mapping[str, bool]] = None
    authority: frozenset[str] = frozenset()
    dissent: tuple[tuple[str, str], ...] = ()  # (agent, decision argument id)

    @staticmethod
    def initial(
        model: EpistemicModel,
        actual: Optional[Mapping[str, bool]] = None,
        authority: Iterable[str] = (),
    ) -> "DependencyStructure":
        return DependencyStructure(
            turn=0,
            model=model,
            af=ArgFramework(),
            cm={ag: () for ag in model.agents},
            dep={},
            actual=dict(actual) if actual else None,
            authority=frozenset(authority),
        )

    # -- read side ---------------------------------------------------------

    def extension(self) -> frozenset[str]:
        return preferred_extension(self.af)

    def actual_world_id(self) -> str:
        if self.actual is None:
            raise NoActualWorld("scenario declares no ground truth")
        wid = self.model.world_matching(self.actual)
        if wid is None:
            raise NoActualWorld("no unique world matches the declared ground truth")
        return wid

    def _belief_anchor(self) -> Optional[str]:
        """World at which belief-valued preconditions are evaluated: the actual
        world when declared, else the first world (public cells make the
        choice irrelevant)."""
        if self.actual is not None:
            try:
                return self.actual_world_id()
            except NoActualWorld:
                pass
        return self.model.worlds[0].id if self.model.worlds else None

    def believed_by(self, agent: str, phi: Formula) -> bool:
        anchor = self._belief_anchor()
        return anchor is not None and self.model.eval(anchor, Believes(agent, phi))

    def believed_by_all(self, phi: Formula) -> bool:
        return all(self.believed_by(ag, phi) for ag in self.model.agents)

    def primary_arg(self, claim: str) -> Optional[Argument]:
        """The claim-bearing argument an operation on ``claim`` acts on: the
        first positive non-con argument with that claim."""
        for arg in self.af.args:
            if arg.claim == claim and arg.claim_value and arg.arg_type != ArgType.CON:
                return arg
        return None

    def open_problems(self) -> tuple[AbductiveProblem, ...]:
        return tuple(p for p in self.queue if p.status == "open")

    def committed_claims(self, agent: str) -> set[str]:
        return {self.af.get(i).claim for i in self.cm.get(agent, ())}


def _literal(op_claim: str, value: bool) -> Formula:
    ref = AtomRef(op_claim)
    return ref if value else Not(ref)


def _fresh_arg_id(d: DependencyStructure, stem: str) -> str:
    if not d.af.has(stem):
        return stem
    n = 2
    while d.af.has(f"{stem}_{n}"):
        n += 1
    return f"{stem}_{n}"


# ---------------------------------------------------------------------------
# Preconditions
# ---------------------------------------------------------------------------

def check_precondition(op: TurnOperation, d: DependencyStructure):
    """Evaluate the operation's gate. Returns None when the operation may be
    applied, otherwise a Violation value."""
    checker = _CHECKERS[op.kind]
    return checker(op, d)


def _registered(d: DependencyStructure, atom_id: str) -> bool:
    return d.model.has_atom(atom_id)


def _check_observe(op: TurnOperation, d: DependencyStructure):
    psi = op.statement if op.statement is not None else (
        _literal(op.claim, op.claim_value) if op.claim else None
    )
    if psi is None:
        return Violation("missing-statement", "observe needs a claim or statement")
    missing = [a for a in sorted(psi.atoms()) if not _registered(d, a)]
    if missing:
        return Violation(
            "unregistered-atom",
            f"atoms not yet in the registry: {', '.join(missing)}",
            suggested_op=OpKind.EXPAND_AWARENESS,
        )
    return None


def _acceptable_problems(op: TurnOperation, d: DependencyStructure):
    """Open problems whose abductive check accepts the candidate."""
    gamma = AtomRef(op.claim)
    # A fresh hypothesis atom is evaluated on the model it would be registered
    # in; splitting every world leaves the candidate unbelieved either way, so
    # register-on-probe matches apply-time behaviour.
    model = d.model
    if not model.has_atom(op.claim):
        model = model.expand_awareness(model.agents, Atom(op.claim, "hypothesis", op.label))
    anchor_struct = replace(d, model=model)
    anchor = anchor_struct._belief_anchor()
    if anchor is None:
        return [], "model has no worlds"
    accepted = []
    for prob in d.open_problems():
        verdict = check_abductive_solution(model, anchor, prob.agent, prob.chi, gamma)
        if verdict.accepted:
            accepted.append(prob)
    return accepted, None


def _check_hypothesize(op: TurnOperation, d: DependencyStructure):
    if not op.claim:
        return Violation("missing-claim", "hypothesize needs a claim atom")
    missing = [a for a in op.deps if not _registered(d, a)]
    if missing:
        return Violation(
            "unregistered-atom",
            f"dep atoms not in the registry: {', '.join(missing)}",
            suggested_op=OpKind.EXPAND_AWARENESS,
        )
    existing = d.primary_arg(op.claim)
    if existing is not None and existing.arg_type == ArgType.HYPOTHESIZE:
        return Violation("already-hypothesized", op.claim)
    if not d.open_problems():
        return Violation("no-open-abductive-problem",
                         "nothing surprising awaits an explanation")
    accepted, err = _acceptable_problems(op, d)
    if err:
        return Violation("no-open-abductive-problem", err)
    if not accepted:
        return Violation("abduction-rejected",
                         f"{op.claim} fails the abductive-solution conditions "
                         "for every open problem")
    return None


def _check_support(op: TurnOperation, d: DependencyStructure):
    if not op.claim or not _registered(d, op.claim):
        return Violation("unregistered-atom", str(op.claim),
                         suggested_op=OpKind.EXPAND_AWARENESS)
    primary = d.primary_arg(op.claim)
    if primary is None:
        return Violation("unknown-claim", f"no argument claims {op.claim}")
    if not op.evidence:
        return Violation("missing-evidence", "support needs evidence atoms")
    missing = [a for a in op.evidence if not _registered(d, a)]
    if missing:
        return Violation("unregistered-atom", ", ".join(missing),
                         suggested_op=OpKind.EXPAND_AWARENESS)
    known = set(d.dep.get(primary.id, ()))
    if set(op.evidence) <= known and not op.rebuts:
        return Violation("redundant-evidence",
                         f"{', '.join(op.evidence)} already supports {op.claim}")
    conj = [AtomRef(op.claim)] + [AtomRef(e) for e in op.evidence]
    if not any(all(d.model._eval(w, f) for f in conj) for w in d.model.worlds):
        return Violation("incompatible-evidence",
                         "no world satisfies the claim with this evidence")
    if op.rebuts and not d.af.has(op.rebuts):
        return Violation("unknown-argument", op.rebuts)
    return None


def _check_undermine(op: TurnOperation, d: DependencyStructure):
    if not op.claim or not _registered(d, op.claim):
        return Violation("unregistered-atom", str(op.claim))
    primary = d.primary_arg(op.claim)
    if primary is None:
        return Violation("unknown-claim", f"no argument claims {op.claim}")
    if not d.believed_by_all(_literal(op.claim, primary.claim_value)):
        return Violation("not-currently-believed", op.claim)
    missing = [a for a in op.evidence if not _registered(d, a)]
    if missing:
        return Violation("unregistered-atom", ", ".join(missing))
    if op.target and not d.af.has(op.target):
        return Violation("unknown-argument", op.target)
    return None


def _check_revise(op: TurnOperation, d: DependencyStructure):
    if not op.claim or not _registered(d, op.claim):
        return Violation("unregistered-atom", str(op.claim))
    primary = d.primary_arg(op.claim)
    if primary is None:
        return Violation("unknown-claim", f"no argument claims {op.claim}")
    if primary.status == ArgStatus.RESOLVED:
        return Violation("cannot-revise-resolved", op.claim)
    return None


def _check_expand(op: TurnOperation, d: DependencyStructure):
    if not op.claim:
        return Violation("missing-claim", "expand-awareness needs an atom")
    agents = op.agents or d.model.agents
    if _registered(d, op.claim):
        key = AtomRef(op.claim).key()
        if all(key in d.model.awareness.get(ag, frozenset()) for ag in agents):
            return Violation("no-op-expansion",
                             f"{op.claim} is already registered and known",
                             suggested_op=OpKind.OBSERVE)
    return None


def _check_resolve(op: TurnOperation, d: DependencyStructure):
    if not op.claim:
        return Violation("missing-claim", "resolve needs a claim atom")
    if op.mode not in ("consensual", "authoritative"):
        return Violation("bad-mode", op.mode)
    missing = [a for a in (op.claim,) + op.deps if not _registered(d, a)]
    if missing:
        return Violation("unregistered-atom", ", ".join(missing),
                         suggested_op=OpKind.EXPAND_AWARENESS)
    for ref in op.subsumes:
        if not d.af.has(ref):
            return Violation("unknown-argument", ref)
        status = d.af.get(ref).status
        if status not in (ArgStatus.ACTIVE, ArgStatus.RESOLVED):
            return Violation("bad-subsumption", f"{ref} is {status.value}")
    primary = d.primary_arg(op.claim)
    if op.mode == "authoritative":
        if op.speaker not in d.authority:
            return Violation("no-decision-authority", op.speaker)
        if not op.dissenters:
            return Violation("no-dissent-recorded",
                             "authoritative resolve without recorded dissent; "
                             "use consensual mode")
        for ref in op.overrules:
            if not d.af.has(ref):
                return Violation("unknown-argument", ref)
        return None
    # consensual
    if primary is not None:
        if primary.status not in (ArgStatus.ACTIVE, ArgStatus.RESOLVED):
            return Violation("bad-status", f"{primary.id} is {primary.status.value}")
        ext = d.extension()
        undefeated = [a for a in d.af.attackers_of(primary.id) if a in ext]
        if undefeated:
            return Violation("undefeated-attacks",
                             f"{primary.id} attacked by {', '.join(sorted(undefeated))}")
    committed = all(op.claim in d.committed_claims(ag) for ag in d.model.agents)
    lit = _literal(op.claim, op.claim_value)
    if not committed and not d.believed_by_all(lit):
        return Violation("no-consensus",
                         f"{op.claim} is neither jointly committed nor jointly believed")
    return None


def _check_question(op: TurnOperation, d: DependencyStructure):
    if op.statement is None:
        return Violation("missing-statement", "question needs the flagged formula")
    missing = [a for a in sorted(op.statement.atoms()) if not _registered(d, a)]
    if missing:
        return Violation("unregistered-atom", ", ".join(missing),
                         suggested_op=OpKind.EXPAND_AWARENESS)
    return None


_CHECKERS = {
    OpKind.OBSERVE: _check_observe,
    OpKind.HYPOTHESIZE: _check_hypothesize,
    OpKind.SUPPORT: _check_support,
    OpKind.UNDERMINE: _check_undermine,
    OpKind.REVISE: _check_revise,
    OpKind.EXPAND_AWARENESS: _check_expand,
    OpKind.RESOLVE: _check_resolve,
    OpKind.QUESTION: _check_question,
}


# ---------------------------------------------------------------------------
# Apply
# ---------------------------------------------------------------------------

def apply(op: TurnOperation, d: DependencyStructure,
          announce: bool = True) -> DependencyStructure:
    """One classified operation, one turn: route the update through the model,
    the framework, the commitments and the dep map together. Raises
    PreconditionError when the gate fails; the input structure is unchanged.

    ``announce=False`` suppresses the hard-announcement half of Observe (used
    by simultaneous rounds, which announce jointly up front)."""
    violation = check_precondition(op, d)
    if violation is not None:
        raise PreconditionError(violation)
    handler = _HANDLERS[op.kind]
    out = handler(op, d, announce)
    return replace(out, turn=d.turn + 1)


def apply_turn(ops: Sequence[TurnOperation], d: DependencyStructure,
               simultaneous: bool = False) -> DependencyStructure:
    """Apply a turn's operation list atomically: a mid-list precondition
    failure leaves the caller's structure untouched (the exception carries the
    violation).

    ``simultaneous=True`` (all-Observe rounds) evaluates every announcement
    against the turn-entry model before pruning, so one speaker's statement
    does not inform another's within the round."""
    if simultaneous:
        if any(op.kind != OpKind.OBSERVE for op in ops):
            raise ValueError("simultaneous turns must contain only observe operations")
        for op in ops:
            violation = check_precondition(op, d)
            if violation is not None:
                raise PreconditionError(violation)
        psis = [
            op.statement if op.statement is not None else _literal(op.claim, op.claim_value)
            for op in ops
        ]
        current = replace(d, model=d.model.announce_joint(psis))
        for op in ops:
            current = apply(op, current, announce=False)
        return current
    current = d
    for op in ops:
        current = apply(op, current)
    return current


def _commit(cm: Mapping[str, tuple[str, ...]], agent: str, arg_id: str):
    out = dict(cm)
    existing = out.get(agent, ())
    if arg_id not in existing:
        out[agent] = existing + (arg_id,)
    return out


def _new_argument(
    d: DependencyStructure,
    op: TurnOperation,
    arg_type: ArgType,
    claim: str,
    deps: Sequence[str],
    status: ArgStatus = ArgStatus.ACTIVE,
    stem: Optional[str] = None,
) -> tuple[DependencyStructure, Argument]:
    turn = d.turn + 1
    arg = Argument(
        id=op.arg_id or _fresh_arg_id(d, stem or f"{arg_type.value}_{claim}"),
        claim=claim,
        speaker=op.speaker,
        turn=turn,
        arg_type=arg_type,
        status=status,
        status_turn=turn,
        claim_value=op.claim_value,
    )
    dep = dict(d.dep)
    dep[arg.id] = tuple(deps)
    out = replace(d, af=d.af.with_argument(arg), dep=dep,
                  cm=_commit(d.cm, op.speaker, arg.id))
    return out, arg


def _register_if_fresh(d: DependencyStructure, atom: Atom,
                       agents: Sequence[str] = ()) -> DependencyStructure:
    if d.model.has_atom(atom.id):
        return d
    model = d.model.expand_awareness(agents or d.model.agents, atom)
    return replace(d, model=model)


def _apply_observe(op: TurnOperation, d: DependencyStructure,
                   announce: bool) -> DependencyStructure:
    psi = op.statement if op.statement is not None else _literal(op.claim, op.claim_value)
    out = d
    if announce:
        out = replace(out, model=out.model.announce_hard(psi))
    if op.claim is None:
        # Compound announcement: public information without a claim-bearing
        # argument (nothing for the dep map or the commitment store to hold).
        return out
    out, arg = _new_argument(out, op, ArgType.OBSERVE, op.claim, (), stem=f"obs_{op.claim}")
    # Contradicted literal claims are attacked by the fresh observation.
    af = out.af
    for other in out.af.args:
        if other.id != arg.id and other.claim == op.claim and other.claim_value != op.claim_value:
            af = af.with_attack(arg.id, other.id)
    return replace(out, af=af)


def _cited(problem: AbductiveProblem, op: TurnOperation) -> bool:
    cited = set(op.deps) | {op.claim}
    return bool(problem.chi.atoms() & cited)


def _apply_hypothesize(op: TurnOperation, d: DependencyStructure,
                       announce: bool) -> DependencyStructure:
    out = _register_if_fresh(d, Atom(op.claim, "hypothesis", op.label))
    gamma = AtomRef(op.claim)
    out = replace(out, model=out.model.upgrade_lexicographic(gamma))
    out, arg = _new_argument(out, op, ArgType.HYPOTHESIZE, op.claim, op.deps,
                             stem=f"hyp_{op.claim}")
    af = out.af
    for attacker in op.attacked_by:
        af = af.with_attack(attacker, arg.id)
    # Close the oldest open problem this hypothesis cites.
    queue = list(out.queue)
    for i, prob in enumerate(queue):
        if prob.status == "open" and _cited(prob, op):
            queue[i] = replace(prob, status="closed", closed_by=op.claim)
            break
    return replace(out, af=af, queue=tuple(queue))


def _apply_support(op: TurnOperation, d: DependencyStructure,
                   announce: bool) -> DependencyStructure:
    gamma = AtomRef(op.claim)
    model = (d.model.upgrade_lexicographic(gamma) if op.specific
             else d.model.upgrade_conservative(gamma))
    out = replace(d, model=model)
    primary = out.primary_arg(op.claim)
    out, arg = _new_argument(out, op, ArgType.PRO, op.claim, op.evidence,
                             stem=f"sup_{op.claim}")
    dep = dict(out.dep)
    merged = list(dep.get(primary.id, ()))
    merged.extend(e for e in op.evidence if e not in merged)
    dep[primary.id] = tuple(merged)
    out = replace(out, dep=dep)
    if op.rebuts:
        out = replace(out, af=out.af.with_attack(arg.id, op.rebuts))
    return out


def _apply_undermine(op: TurnOperation, d: DependencyStructure,
                     announce: bool) -> DependencyStructure:
    primary = d.primary_arg(op.claim)
    gamma = _literal(op.claim, primary.claim_value)
    if op.falsified_prediction is not None:
        # A falsified prediction removes the worlds where the claim still
        # carried that prediction; plain downgrades never eliminate.
        model = d.model.announce_hard(Not(And([gamma, op.falsified_prediction])))
    else:
        model = d.model.upgrade_lexicographic(Not(gamma))
    out = replace(d, model=model)
    out, arg = _new_argument(out, op, ArgType.CON, op.claim, op.evidence,
                             stem=f"con_{op.claim}")
    target = op.target or primary.id
    out = replace(out, af=out.af.with_attack(arg.id, target))
    if primary.status == ArgStatus.ACTIVE:
        out = replace(out, af=out.af.with_updated(
            primary.with_status(ArgStatus.WEAKENED, d.turn + 1)))
    return out


def _apply_revise(op: TurnOperation, d: DependencyStructure,
                  announce: bool) -> DependencyStructure:
    primary = d.primary_arg(op.claim)
    gamma = _literal(op.claim, primary.claim_value)
    out = replace(d, model=d.model.announce_hard(Not(gamma)))
    if primary.status != ArgStatus.ABANDONED:
        out = replace(out, af=out.af.with_updated(
            primary.with_status(ArgStatus.ABANDONED, d.turn + 1)))
    if op.evidence:
        af = out.af
        for ev in op.evidence:
            for arg in out.af.args:
                if arg.claim == ev and arg.claim_value and arg.arg_type != ArgType.CON:
                    af = af.with_attack(arg.id, primary.id)
                    break
        out = replace(out, af=af)
    return out


def _apply_expand(op: TurnOperation, d: DependencyStructure,
                  announce: bool) -> DependencyStructure:
    agents = op.agents or d.model.agents
    model = d.model.expand_awareness(agents, Atom(op.claim, op.atom_kind, op.label))
    return replace(d, model=model)


def _apply_resolve(op: TurnOperation, d: DependencyStructure,
                   announce: bool) -> DependencyStructure:
    out = d
    turn = d.turn + 1
    if op.mode == "consensual":
        psi = op.statement if op.statement is not None else _literal(op.claim, op.claim_value)
        out = replace(out, model=out.model.announce_hard(psi))
        primary = out.primary_arg(op.claim)
        if primary is not None:
            out = replace(out, af=out.af.with_updated(
                primary.with_status(ArgStatus.RESOLVED, turn)))
            out = replace(out, cm=_commit(out.cm, op.speaker, primary.id))
            decision = primary
        else:
            out, decision = _new_argument(out, op, ArgType.RESOLVE, op.claim,
                                          op.deps, status=ArgStatus.RESOLVED,
                                          stem=f"res_{op.claim}")
    else:
        out, decision = _new_argument(out, op, ArgType.RESOLVE, op.claim,
                                      op.deps, status=ArgStatus.RESOLVED,
                                      stem=f"decide_{op.claim}")
        out = replace(out, dissent=out.dissent + tuple(
            (ag, decision.id) for ag in op.dissenters))
        af = out.af
        for ref in op.overrules:
            af = af.with_attack(decision.id, ref)
        out = replace(out, af=af)
    # Subsumption: the resolved claim joins each subsumed argument's supports.
    dep = dict(out.dep)
    af = out.af
    for ref in op.subsumes:
        existing = list(dep.get(ref, ()))
        if op.claim not in existing:
            existing.append(op.claim)
        dep[ref] = tuple(existing)
        sub = af.get(ref)
        if sub.status != ArgStatus.RESOLVED:
            af = af.with_updated(sub.with_status(ArgStatus.RESOLVED, turn))
    return replace(out, dep=dep, af=af)


def _apply_question(op: TurnOperation, d: DependencyStructure,
                    announce: bool) -> DependencyStructure:
    chi = op.statement
    key = chi.canonical().key()
    if any(p.status == "open" and p.chi_key() == key for p in d.queue):
        return d  # re-asking an open question is a no-op
    prob = AbductiveProblem(op.speaker, chi, opened_turn=d.turn + 1)
    return replace(d, queue=d.queue + (prob,))


_HANDLERS = {
    OpKind.OBSERVE: _apply_observe,
    OpKind.HYPOTHESIZE: _apply_hypothesize,
    OpKind.SUPPORT: _apply_support,
    OpKind.UNDERMINE: _apply_undermine,
    OpKind.REVISE: _apply_revise,
    OpKind.EXPAND_AWARENESS: _apply_expand,
    OpKind.RESOLVE: _apply_resolve,
    OpKind.QUESTION: _apply_question,
}


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def surprise_scan(d: DependencyStructure, chi: Formula, agent: str) -> tuple[DependencyStructure, bool]:
    """Flag a surprising observation: true at the actual world but not yet
    believed. Returns (structure, enqueued?); the belief check runs against the
    current (pre-announcement) model, so scans precede the Observe they guard."""
    wid = d.actual_world_id()
    if not d.model.eval(wid, chi):
        return d, False
    if d.model.eval(wid, Believes(agent, chi)):
        return d, False
    key = chi.canonical().key()
    if any(p.status == "open" and p.chi_key() == key for p in d.queue):
        return d, False
    prob = AbductiveProblem(agent, chi, opened_turn=d.turn)
    return replace(d, queue=d.queue + (prob,)), True


@dataclass(frozen=True)
class VerifyResult:
    """``decision_path`` records how far the check had to look before the
    verdict was fixed: ``null`` (no entity resolved), ``status`` (lifecycle
    label), ``extension`` (acceptance), ``accepted`` (grounded without reading
    any dep edge), ``walk`` (the verdict required dep-edge traversal)."""

    verdict: str                                   # grounded | ungrounded
    dep_chain: tuple[str, ...]
    evidence: tuple[tuple[str, str, int], ...]     # (argument id, status, turn)
    decision_path: str = "accepted"
    warning: str = ""

    def used_dep_edges(self) -> bool:
        return self.decision_path == "walk"


def _atom_kinds(model: EpistemicModel) -> dict[str, str]:
    return {a.id: a.kind for a in model.registry}


def verify(
    claim: str,
    d: DependencyStructure,
    def2_literal: bool = False,
    weakened_grounds: bool = False,
    resolver=None,
) -> VerifyResult:
    """Is an asserted claim grounded in the maintained structure?

    Default semantics: grounded iff some positive argument carries the claim,
    its lifecycle status is active or resolved (weakened counts only under
    ``weakened_grounds``), and it sits in the current preferred extension.
    ``def2_literal`` reduces the check to claim membership. The evidence list
    always names the matched arguments with status and the turn that status
    was acquired, including abandoned matches on the ungrounded path. Nothing
    here reads turn text; cost is linear in the framework plus dep sizes.
    """
    name = resolver(claim) if resolver else claim
    candidates = [
        a for a in d.af.args
        if a.claim == name and a.claim_value and a.arg_type != ArgType.CON
    ]
    evidence = tuple((a.id, a.status.value, a.status_turn) for a in candidates)
    if not candidates:
        return VerifyResult("ungrounded", (), (), decision_path="null")
    if def2_literal:
        chain = walk_deps(candidates[0].id, d.dep, d.af, _atom_kinds(d.model))
        return VerifyResult("grounded", chain, evidence, decision_path="accepted")
    ok_status = [
        a for a in candidates
        if a.status in (ArgStatus.ACTIVE, ArgStatus.RESOLVED)
        or (weakened_grounds and a.status == ArgStatus.WEAKENED)
    ]
    warning = ""
    if not ok_status:
        return VerifyResult("ungrounded", (), evidence, decision_path="status")
    if any(a.status == ArgStatus.WEAKENED for a in ok_status):
        warning = "grounded via a weakened argument"
    ext = d.extension()
    accepted = [a for a in ok_status if a.id in ext]
    if not accepted:
        return VerifyResult("ungrounded", (), evidence, decision_path="extension")
    # The verdict is settled at this point; the dep chain is reported context.
    chain = walk_deps(accepted[0].id, d.dep, d.af, _atom_kinds(d.model))
    return VerifyResult("grounded", chain, evidence, decision_path="accepted",
                        warning=warning)


def verify_continuation(
    d: DependencyStructure,
    asserts: Optional[str] = None,
    premises: Sequence[str] = (),
    weakened_grounds: bool = False,
) -> VerifyResult:
    """Grounding check for a candidate continuation.

    With an asserted claim id this is ``verify``. Without one, the stated
    premises are checked instead: each premise must resolve to a standing
    argument whose transitive support chain contains no abandoned or weakened
    member. A candidate with neither an asserted claim nor premises is
    ungrounded by design (no single entity in the structure underlies it).
    """
    if asserts is not None:
        return verify(asserts, d, weakened_grounds=weakened_grounds)
    if not premises:
        return VerifyResult("ungrounded", (), (),
                            decision_path="null",
                            warning="no asserted entity to resolve")
    kinds = _atom_kinds(d.model)
    chain_all: list[str] = []
    evidence: list[tuple[str, str, int]] = []
    for premise in premises:
        args = [
            a for a in d.af.args
            if a.claim == premise and a.claim_value and a.arg_type != ArgType.CON
        ]
        if not args:
            return VerifyResult("ungrounded", (), tuple(evidence), decision_path="null")
        evidence.extend((a.id, a.status.value, a.status_turn) for a in args)
        ok = [
            a for a in args
            if a.status in (ArgStatus.ACTIVE, ArgStatus.RESOLVED)
            or (weakened_grounds and a.status == ArgStatus.WEAKENED)
        ]
        if not ok:
            return VerifyResult("ungrounded", (), tuple(evidence), decision_path="status")
        anchor = ok[0]
        # Walk the premise's chain; a dead hypothesis anywhere in it breaks
        # the grounding even though the premise argument itself stands.
        chain = walk_deps(anchor.id, d.dep, d.af, kinds)
        for atom in chain:
            if atom in chain_all:
                continue
            chain_all.append(atom)
            if kinds.get(atom) != "hypothesis":
                continue
            holders = [
                a for a in d.af.args
                if a.claim == atom and a.claim_value and a.arg_type != ArgType.CON
            ]
            dead = [
                a for a in holders
                if a.status in (ArgStatus.ABANDONED, ArgStatus.WEAKENED)
            ]
            alive = [a for a in holders if a.status in (ArgStatus.ACTIVE, ArgStatus.RESOLVED)]
            if dead and not alive:
                evidence.extend((a.id, a.status.value, a.status_turn) for a in dead)
                return VerifyResult("ungrounded", (), tuple(evidence), decision_path="walk")
    return VerifyResult("grounded", tuple(chain_all), tuple(evidence), decision_path="walk")


def structure_affected(d: DependencyStructure, atom_id: str):
    return af_affected(atom_id, d.extension(), d.dep,
                       registry_ids=[a.id for a in d.model.registry])


def structure_retract(d: DependencyStructure, atom_id: str,
                      mode: str = "direct") -> RetractionReport:
    return af_retract(atom_id, d.af, d.extension(), d.dep, mode=mode,
                      registry_ids=[a.id for a in d.model.registry])


def apply_retraction(d: DependencyStructure, report: RetractionReport) -> DependencyStructure:
    """Commit a retraction report: drop the removed arguments from the
    framework, the dep map and the commitment store."""
    gone = report.removed
    dep = {k: v for k, v in d.dep.items() if k not in gone}
    cm = {ag: tuple(i for i in ids if i not in gone) for ag, ids in d.cm.items()}
    return replace(d, af=d.af.without(gone), dep=dep, cm=cm)


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

SNAPSHOT_FORMAT = 1


def snapshot(d: DependencyStructure) -> dict:
    """Versioned, JSON-ready view of the structure with stable ordering."""
    ext = sorted(d.extension())
    return {
        "format": SNAPSHOT_FORMAT,
        "turn": d.turn,
        "registry": [
            {"id": a.id, "kind": a.kind, "label": a.label} for a in d.model.registry
        ],
        "agents": list(d.model.agents),
        "world_count": len(d.model.worlds),
        "worlds": [
            {"id": w.id, "values": ["1" if v else "0" for v in w.values]}
            for w in d.model.worlds
        ],
        "ranks": {
            ag: {wid: d.model.rank[ag][wid] for wid in sorted(d.model.rank[ag])}
            for ag in d.model.agents
        },
        "awareness": {ag: sorted(d.model.awareness.get(ag, ())) for ag in d.model.agents},
        "inconsistent": d.model.inconsistent,
        "arguments": [
            {
                "id": a.id,
                "claim": a.claim,
                "claim_value": a.claim_value,
                "speaker": a.speaker,
                "turn": a.turn,
                "type": a.arg_type.value,
                "status": a.status.value,
                "status_turn": a.status_turn,
            }
            for a in d.af.args
        ],
        "attacks": [[s, t] for s, t in d.af.attacks],
        "extension": ext,
        "deps": {arg_id: list(atoms) for arg_id, atoms in sorted(d.dep.items())},
        "commitments": {ag: list(ids) for ag, ids in sorted(d.cm.items())},
        "queue": [
            {
                "agent": p.agent,
                "chi": p.chi.to_json(),
                "chi_key": p.chi_key(),
                "status": p.status,
                "closed_by": p.closed_by,
                "opened_turn": p.opened_turn,
            }
            for p in d.queue
        ],
        "dissent": [[ag, arg] for ag, arg in d.dissent],
        "actual": dict(d.actual) if d.actual is not None else None,
        "authority": sorted(d.authority),
    }


def structure_from_snapshot(doc: Mapping) -> DependencyStructure:
    """Rebuild a structure from its snapshot document."""
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"unsupported snapshot format {doc.get('format')!r}")
    from .model import World

    registry = tuple(Atom(r["id"], r["kind"], r.get("label", "")) for r in doc["registry"])
    agents = tuple(doc["agents"])
    worlds = tuple(
        World(w["id"], tuple(v == "1" for v in w["values"])) for w in doc["worlds"]
    )
    rank = {ag: dict(doc["ranks"].get(ag, {})) for ag in agents}
    # Cells are not serialized independently: rebuild a public single cell
    # unless world ids disagree, which scenario snapshots never do mid-run.
    cells = {ag: {w.id: 0 for w in worlds} for ag in agents}
    awareness = {ag: frozenset(doc["awareness"].get(ag, ())) for ag in agents}
    model = EpistemicModel(registry, agents, worlds, rank, cells, awareness,
                           inconsistent=doc.get("inconsistent", False))
    af = ArgFramework()
    for a in doc["arguments"]:
        af = af.with_argument(Argument(
            id=a["id"], claim=a["claim"], speaker=a["speaker"], turn=a["turn"],
            arg_type=ArgType(a["type"]), status=ArgStatus(a["status"]),
            status_turn=a.get("status_turn", a["turn"]),
            claim_value=a.get("claim_value", True),
        ))
    for s, t in doc["attacks"]:
        af = af.with_attack(s, t)
    queue = tuple(
        AbductiveProblem(
            agent=p["agent"],
            chi=formula_from_json(p["chi"]),
            status=p["status"],
            closed_by=p.get("closed_by"),
            opened_turn=p.get("opened_turn", 0),
        )
        for p in doc.get("queue", ())
    )
    return DependencyStructure(
        turn=doc["turn"],
        model=model,
        af=af,
        cm={ag: tuple(ids) for ag, ids in doc.get("commitments", {}).items()},
        dep={k: tuple(v) for k, v in doc.get("deps", {}).items()},
        queue=queue,
        actual=doc.get("actual"),
        authority=frozenset(doc.get("authority", ())),
        dissent=tuple((ag, arg) for ag, arg in doc.get("dissent", ())),
    )


@dataclass(frozen=True)
class Mismatch:
    path: str
    expected: object
    actual: object


def diff_expected(snap: Mapping, expected: Mapping) -> list[Mismatch]:
    """Compare a snapshot against a partial expectation; only the fields the
    expectation names are checked."""
    out: list[Mismatch] = []
    if "world_count" in expected and snap["world_count"] != expected["world_count"]:
        out.append(Mismatch("world_count", expected["world_count"], snap["world_count"]))
    statuses = {a["id"]: a["status"] for a in snap["arguments"]}
    for arg_id, want in expected.get("statuses", {}).items():
        got = statuses.get(arg_id)
        if got != want:
            out.append(Mismatch(f"statuses.{arg_id}", want, got))
    ext = set(snap["extension"])
    for arg_id in expected.get("extension_includes", ()):
        if arg_id not in ext:
            out.append(Mismatch(f"extension_includes.{arg_id}", True, False))
    for arg_id in expected.get("extension_excludes", ()):
        if arg_id in ext:
            out.append(Mismatch(f"extension_excludes.{arg_id}", False, True))
    for arg_id, want in expected.get("deps", {}).items():
        got = snap["deps"].get(arg_id)
        if got is None or set(got) != set(want):
            out.append(Mismatch(f"deps.{arg_id}", sorted(want), got))
    for arg_id, want in expected.get("deps_include", {}).items():
        got = set(snap["deps"].get(arg_id, ()))
        missing = [atom for atom in want if atom not in got]
        if missing:
            out.append(Mismatch(f"deps_include.{arg_id}", sorted(want), sorted(got)))
    for agent, want in expected.get("commitments_include", {}).items():
        got = set(snap["commitments"].get(agent, ()))
        missing = [i for i in want if i not in got]
        if missing:
            out.append(Mismatch(f"commitments_include.{agent}", want, sorted(got)))
    for agent, want in expected.get("commitments_exclude", {}).items():
        got = set(snap["commitments"].get(agent, ()))
        present = [i for i in want if i in got]
        if present:
            out.append(Mismatch(f"commitments_exclude.{agent}", [], present))
    if "open_problems" in expected:
        open_keys = [p["chi_key"] for p in snap["queue"] if p["status"] == "open"]
        if sorted(open_keys) != sorted(expected["open_problems"]):
            out.append(Mismatch("open_problems", expected["open_problems"], open_keys))
    return out
