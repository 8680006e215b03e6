"""The utterance-to-operations boundary.

Two implementations of the classification interface: a deterministic scripted
one replaying a scenario's gold labels, and an adapter for an external
classifier speaking a small JSON protocol:

    POST <endpoint>
    request:  {"utterance": str, "context": str, "condition": str,
               "violation": str | null}
    response: {"operations": [<operation document>, ...]}

Operation documents use the same encoding as scenario gold labels (see
``schemas/scenario.json``). The engine never sees an operation that failed
schema validation. On an engine precondition violation the loop re-classifies
with the violation name attached, up to the configured budget; a failed turn
leaves the structure untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import httpx
import jsonschema

from .engine import (
    DependencyStructure,
    PreconditionError,
    TurnOperation,
    apply_turn,
)
from .formulas import FormulaError


class GoldLabelMissing(KeyError):
    pass


class AdapterUnreachable(ConnectionError):
    pass


class UnparseableResponse(ValueError):
    pass


class RepromptBudgetExhausted(RuntimeError):
    def __init__(self, attempts: int, last_violation):
        super().__init__(f"classification failed after {attempts} attempts")
        self.attempts = attempts
        self.last_violation = last_violation


PROMPT_CONDITIONS = ("minimal", "definitions", "state_augmented")


@dataclass(frozen=True)
class InterpreterConfig:
    mode: str = "scripted"                     # scripted | external
    endpoint: Optional[str] = None
    prompt_condition: str = "definitions"
    max_reprompts: int = 2
    timeout: float = 30.0


@dataclass(frozen=True)
class ClassifiedTurn:
    turn_id: str
    operations: tuple[TurnOperation, ...]
    raw_response: Optional[str] = None


def _operation_schema() -> dict:
    doc = json.loads(
        resources.files("groundcheck.schemas").joinpath("scenario.json").read_text()
    )
    return {"$defs": doc["$defs"], "$ref": "#/$defs/operation"}


class ScriptedInterpreter:
    """Gold labels as data: classification ignores the text entirely, so the
    stream is pure (same scenario, same output)."""

    def __init__(self, scenario):
        self._by_id = {t.id: t for t in scenario.turns}

    def classify(self, turn_id: str, utterance: str = "", context: str = "",
                 violation: Optional[str] = None) -> ClassifiedTurn:
        turn = self._by_id.get(turn_id)
        if turn is None or not turn.ops:
            raise GoldLabelMissing(turn_id)
        return ClassifiedTurn(turn_id, turn.ops)


class ExternalInterpreter:
    """HTTP adapter for an external classifier. ``transport`` is injectable so
    tests can run against an in-process stub."""

    def __init__(self, config: InterpreterConfig,
                 transport: Optional[httpx.BaseTransport] = None):
        if not config.endpoint:
            raise ValueError("external interpreter needs an endpoint")
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout)
        self._schema = _operation_schema()

    def classify(self, turn_id: str, utterance: str, context: str,
                 violation: Optional[str] = None) -> ClassifiedTurn:
        payload = {
            "utterance": utterance,
            "context": context,
            "condition": self.config.prompt_condition,
            "violation": violation,
        }
        try:
            response = self._client.post(self.config.endpoint, json=payload)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise AdapterUnreachable(str(exc)) from exc
        try:
            body = response.json()
            rows = body["operations"]
            if not isinstance(rows, list) or not rows:
                raise KeyError("operations")
            for row in rows:
                jsonschema.validate(row, self._schema)
            ops = tuple(TurnOperation.from_json(row) for row in rows)
        except (KeyError, ValueError, TypeError,
                jsonschema.ValidationError, FormulaError) as exc:
            raise UnparseableResponse(str(exc)) from exc
        return ClassifiedTurn(turn_id, ops, raw_response=response.text)

    def close(self):
        self._client.close()


def reprompt_loop(
    interpreter,
    turn_id: str,
    utterance: str,
    d: DependencyStructure,
    config: InterpreterConfig,
    context: str = "",
    simultaneous: bool = False,
) -> DependencyStructure:
    """classify -> check preconditions -> apply, re-prompting with the failing
    condition's name until the budget runs out. The input structure is
    returned unchanged inside the raised error when every attempt fails."""
    violation_note: Optional[str] = None
    last = None
    attempts = 0
    for attempts in range(1, config.max_reprompts + 2):
        classified = interpreter.classify(turn_id, utterance, context,
                                          violation=violation_note)
        try:
            return apply_turn(classified.operations, d, simultaneous=simultaneous)
        except PreconditionError as exc:
            last = exc.violation
            violation_note = exc.violation.name
            if exc.violation.suggested_op is not None:
                violation_note += f"; consider {exc.violation.suggested_op.value}"
    raise RepromptBudgetExhausted(attempts, last)
