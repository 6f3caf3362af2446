"""Seeded generators for synthetic interaction libraries."""

from __future__ import annotations

from typing import Dict, List

import numpy as np
import structlog

from ..library import Interaction, InteractionLibrary
from ..models import ProtocolKind, SyntheticProtocolSpec

logger = structlog.get_logger(__name__)

DEFAULT_OPCODES = "SADMCB"

RESPONSE_NAMES: Dict[str, str] = {
    "S": "SearchRsp",
    "A": "AddRsp",
    "D": "DelRsp",
    "M": "ModRsp",
    "C": "CmpRsp",
    "B": "BindRsp",
}

SURNAMES = [
    "Du", "Versteeg", "Schneider", "Han", "Grundy", "Hine", "Will", "Hossain",
    "Miao", "Smith", "Jones", "Brown", "Taylor", "Wilson", "Davies", "Evans",
    "Thomas", "Johnson", "Roberts", "Walker", "Wright", "Robinson", "Thompson", "White",
    "Hughes", "Edwards", "Green", "Hall", "Wood", "Harris", "Lewis", "Martin",
    "Jackson", "Clarke", "Clark", "Turner", "Hill", "Scott", "Cooper", "Morris",
    "Ward", "Moore", "King", "Watson", "Baker", "Harrison", "Morgan", "Patel",
]

GIVEN_NAMES = [
    "Miao", "Steve", "Jun", "John", "Ann", "Li", "Wei", "Maria",
    "Omar", "Sara", "Ivan", "Yuki", "Menka", "Jean", "Ravi", "Nora",
]

FIXED_PAYLOAD_WIDTH = 16
FIXED_MESSAGE_LENGTH = 1 + 4 + FIXED_PAYLOAD_WIDTH
RESPONSE_BIT = 0x80


def response_name(opcode: str) -> str:
    """Response operation name for a directory opcode letter."""
    return RESPONSE_NAMES.get(opcode, f"{opcode}Rsp")


def fixed_status(op: int) -> bytes:
    """16-byte status field of a fixed-width response."""
    return f"OK OP{op:02X}".encode("ascii").ljust(FIXED_PAYLOAD_WIDTH, b" ")


def _operation_sequence(rng: np.random.Generator, n: int, n_ops: int) -> np.ndarray:
    """Balanced operation indices 0..n_ops-1 in seeded random order."""
    return rng.permutation(np.resize(np.arange(n_ops), n))


def _digits(rng: np.random.Generator, count: int) -> str:
    return "".join(str(d) for d in rng.integers(0, 10, size=count))


def _directory_text(spec: SyntheticProtocolSpec, rng: np.random.Generator) -> List[Interaction]:
    alphabet = (spec.opcodes or DEFAULT_OPCODES)[:spec.n_operation_types]
    surnames = spec.surname_pool or SURNAMES
    interactions = []
    for op_index in _operation_sequence(rng, spec.n_interactions, spec.n_operation_types):
        opcode = alphabet[op_index]
        ident = f"{int(rng.integers(0, 1000)):03d}"
        surname = surnames[int(rng.integers(0, len(surnames)))]
        request = f"{{id:{ident},op:{opcode},sn:{surname}}}"
        name = response_name(opcode)
        if name == "SearchRsp":
            given = GIVEN_NAMES[int(rng.integers(0, len(GIVEN_NAMES)))]
            mobile = _digits(rng, int(rng.integers(7, 9)))
            response = (
                f"{{id:{ident},op:{name},result:Ok,gn:{given},sn:{surname},mobile:{mobile}}}"
            )
        else:
            response = f"{{id:{ident},op:{name},result:Ok}}"
        interactions.append(Interaction(request=request.encode("ascii"), response=response.encode("ascii")))
    return interactions


def _fixed_width_binary(spec: SyntheticProtocolSpec, rng: np.random.Generator) -> List[Interaction]:
    surnames = spec.surname_pool or SURNAMES
    interactions = []
    for op_index in _operation_sequence(rng, spec.n_interactions, spec.n_operation_types):
        op = int(op_index) + 1
        correlation = int(rng.integers(0, 1 << 32)).to_bytes(4, "big")
        surname = surnames[int(rng.integers(0, len(surnames)))][:FIXED_PAYLOAD_WIDTH]
        # Account-number digits fill the field after the surname.
        payload = surname + _digits(rng, FIXED_PAYLOAD_WIDTH - len(surname))
        request = bytes([op]) + correlation + payload.encode("ascii")
        response = bytes([op | RESPONSE_BIT]) + correlation + fixed_status(op)
        interactions.append(Interaction(request=request, response=response))
    return interactions


def generate_synthetic(spec: SyntheticProtocolSpec) -> InteractionLibrary:
    """Generate a library deterministically from ``spec.seed``.

    Operation types are balanced (counts differ by at most one) and shuffled;
    identifiers and payload fields come from the seeded generator and pools.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == ProtocolKind.DIRECTORY_TEXT:
        interactions = _directory_text(spec, rng)
    else:
        interactions = _fixed_width_binary(spec, rng)
    library = InteractionLibrary(interactions)
    logger.info(
        "Synthetic library generated",
        kind=spec.kind.value,
        count=len(library),
        operation_types=spec.n_operation_types,
        seed=spec.seed,
    )
    return library
