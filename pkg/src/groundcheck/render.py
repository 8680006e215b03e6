"""Context renderer: deterministic natural-language summaries of what changed.

Two entry points: ``render_summary`` diffs two structures one turn apart and
narrates new arguments, status changes, the leading hypothesis, awareness
growth and the abductive queue; ``render_retraction`` formats a retraction
report in the flag shape surfaced to users ("decision X no longer grounded;
affected by retraction of p; depends on a, b").
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .argumentation import ArgType, RetractionReport
from .engine import DependencyStructure


def _leading_hypotheses(d: DependencyStructure) -> tuple[str, ...]:
    """Hypothesis atoms true at every most-plausible world (first agent's
    ordering; public scenarios share it)."""
    model = d.model
    if not model.worlds or not model.agents:
        return ()
    agent = model.agents[0]
    best = min(model.rank[agent][w.id] for w in model.worlds)
    minimal = [w for w in model.worlds if model.rank[agent][w.id] == best]
    out = []
    for i, atom in enumerate(model.registry):
        if atom.kind != "hypothesis":
            continue
        if all(w.values[i] for w in minimal):
            out.append(atom.id)
    return tuple(out)


def render_summary(before: DependencyStructure, after: DependencyStructure) -> str:
    """Narrate the delta between two structures; empty when nothing changed."""
    lines: list[str] = []
    known = {a.id for a in before.af.args}
    for arg in after.af.args:
        if arg.id not in known:
            polarity = "" if arg.claim_value else "not "
            lines.append(
                f"{polarity}{arg.claim} now {arg.status.value} "
                f"({arg.arg_type.value} by {arg.speaker})"
            )
    for arg in after.af.args:
        if arg.id in known:
            old = before.af.get(arg.id)
            if old.status != arg.status:
                lines.append(f"{arg.claim} now {arg.status.value}")
    old_deps = {k: set(v) for k, v in before.dep.items()}
    for arg_id, atoms in after.dep.items():
        grown = [a for a in atoms if a not in old_deps.get(arg_id, set())]
        if arg_id in known and grown:
            lines.append(f"{arg_id} now also supported by {', '.join(grown)}")
    before_lead = _leading_hypotheses(before)
    after_lead = _leading_hypotheses(after)
    if after_lead and after_lead != before_lead:
        lines.append(f"most plausible hypothesis: {', '.join(after_lead)}")
    for agent in after.model.agents:
        old_aw = before.model.awareness.get(agent, frozenset())
        new_aw = after.model.awareness.get(agent, frozenset()) - old_aw
        if new_aw:
            lines.append(f"{agent} now aware of {', '.join(sorted(new_aw))}")
            break  # public expansions repeat per agent; one line suffices
    old_open = {p.chi_key() for p in before.queue if p.status == "open"}
    new_open = {p.chi_key() for p in after.queue if p.status == "open"}
    for chi in sorted(new_open - old_open):
        lines.append(f"open problem: {chi} awaits an explanation")
    for chi in sorted(old_open - new_open):
        lines.append(f"problem {chi} explained")
    if after.model.inconsistent and not before.model.inconsistent:
        lines.append("announcement inconsistent with the model; revision needed")
    return "\n".join(lines)


def render_retraction(
    report: RetractionReport,
    d: DependencyStructure,
) -> str:
    """Flag lines for a retraction, decision arguments first."""
    lines: list[str] = []
    ordered = sorted(
        report.affected,
        key=lambda i: (d.af.get(i).arg_type != ArgType.RESOLVE, i),
    )
    for arg_id in ordered:
        arg = d.af.get(arg_id)
        noun = "decision" if arg.arg_type == ArgType.RESOLVE else "argument"
        deps = [a for a in d.dep.get(arg_id, ()) if a != report.retracted]
        tail = f"; depends on {', '.join(deps)}" if deps else ""
        lines.append(
            f"{noun} {arg_id} no longer grounded; "
            f"affected by retraction of {report.retracted}{tail}"
        )
    for change in report.reinstated_or_flagged:
        if change.now_in and not change.was_in:
            lines.append(f"{change.arg_id} reinstated (was defeated)")
        elif change.was_in and not change.now_in:
            lines.append(f"{change.arg_id} no longer accepted")
    return "\n".join(lines)
