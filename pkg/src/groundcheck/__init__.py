"""groundcheck: a runtime verifier for conversation grounding.

Maintains an epistemic plausibility model, an argumentation framework, a
commitment record and a dependency map across conversation turns, applies the
eight-operation update algebra, and answers grounded/ungrounded and
retraction-impact queries in time linear in the maintained structure.
"""

__version__ = "0.1.0"

from .argumentation import (
    ArgFramework,
    ArgStatus,
    ArgType,
    Argument,
    RetractionReport,
    affected,
    brute_force_extensions,
    preferred_extension,
    retract,
    walk_deps,
)
from .engine import (
    DependencyStructure,
    OpKind,
    PreconditionError,
    TurnOperation,
    VerifyResult,
    apply,
    apply_turn,
    check_precondition,
    diff_expected,
    snapshot,
    structure_from_snapshot,
    surprise_scan,
    verify,
    verify_continuation,
)
from .formulas import (
    And,
    AtomRef,
    Aware,
    Believes,
    Common,
    Formula,
    Implies,
    Knows,
    Not,
    Or,
    formula_from_json,
)
from .model import Atom, EpistemicModel, check_abductive_solution
