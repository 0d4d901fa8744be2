"""JSON encoding of bindings and pages exchanged over HTTP."""

import base64
import binascii
from typing import Any, Dict, List, Optional

from .errors import PlanDecodeError, PreemptQLError
from .terms import KIND_NAMES, KINDS_BY_NAME, SolutionMapping, Term, TermKind


def term_to_json(term: Term) -> Dict[str, str]:
    data = {"type": KIND_NAMES[term.kind], "value": term.lexical}
    if term.kind == TermKind.LITERAL:
        if term.language:
            data["lang"] = term.language
        elif term.datatype:
            data["datatype"] = term.datatype
    return data


def term_from_json(data: Dict[str, Any]) -> Term:
    try:
        kind = KINDS_BY_NAME[data["type"]]
        return Term(kind, data["value"], data.get("datatype", ""), data.get("lang", ""))
    except (KeyError, TypeError) as e:
        raise PreemptQLError(f"malformed term {data!r}: {e}") from None


def mapping_to_json(mapping: SolutionMapping) -> Dict[str, Dict[str, str]]:
    return {name: term_to_json(value) for name, value in sorted(mapping.items())}


def mapping_from_json(data: Dict[str, Any]) -> SolutionMapping:
    return {name: term_from_json(value) for name, value in data.items()}


def encode_plan(plan: bytes) -> str:
    return base64.b64encode(plan).decode("ascii")


def decode_plan(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, AttributeError):
        raise PlanDecodeError(0, "plan is not valid base64") from None


def page_to_json(bindings: List[SolutionMapping], plan: Optional[bytes], stats: Dict[str, int]) -> Dict[str, Any]:
    body: Dict[str, Any] = {
        "bindings": [mapping_to_json(m) for m in bindings],
        "complete": plan is None,
        "stats": stats,
    }
    if plan is not None:
        body["plan"] = encode_plan(plan)
    return body


def error_to_json(error: PreemptQLError) -> Dict[str, str]:
    return {"error": error.kind, "message": error.message}
