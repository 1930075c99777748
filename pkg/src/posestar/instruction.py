"""Deterministic rule engine mapping edit instructions to body-token groups.

The mapping is data-driven: garment keywords, anchor synonyms, and per-garment
coverage templates live in ``data/instruction_rules.json`` and can be extended
without touching code. Resolution is a two-step process: keyword parse
(:func:`parse_instruction`) and coverage expansion
(:func:`expand_to_token_group`).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import InvalidRangeError, UnknownAnchorError, UnknownGarmentError

STAR_VOCABULARY = ("Neck", "Shoulder", "Elbow", "Wrist", "Hip", "Knee", "Ankle")
FLESHY_VOCABULARY = (
    "Forehead", "Chest", "Waist", "Belly", "Arms", "Hip", "Hand", "Thigh", "Shank", "Torso",
)

# Head-to-toe body order used to resolve "everything between start and end".
# Wrist and Hip share a rank (arm ends near the hip line on a standing body);
# arm-chain tokens are gated by include_arms rather than by this order alone.
ANATOMICAL_ORDER = {
    "Forehead": 0,
    "Neck": 1,
    "Shoulder": 2,
    "Chest": 3,
    "Elbow": 4,
    "Waist": 5,
    "Belly": 6,
    "Torso": 6,
    "Wrist": 7,
    "Hip": 7,
    "Hand": 8,
    "Thigh": 9,
    "Knee": 10,
    "Shank": 11,
    "Ankle": 12,
}


@dataclass(frozen=True)
class Instruction:
    """Parsed surface form of a user instruction."""

    raw: str
    garment_class: str
    garment_noun: str
    length_anchor: str | None = None
    start_override: str | None = None


@dataclass
class TokenGroup:
    """Body-structure group describing what the mask must cover."""

    star_tokens: list[str]
    fleshy_tokens: list[str]
    clothes_tokens: list[str]
    start_anchor: str
    end_anchor: str
    include_arms: bool = False
    include_legs: bool = False

    def all_tokens(self) -> list[str]:
        return [*self.star_tokens, *self.fleshy_tokens, *self.clothes_tokens]


@lru_cache(maxsize=1)
def _rules() -> dict:
    with resources.files("posestar.data").joinpath("instruction_rules.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


def load_rules(path: str | None = None) -> dict:
    """Rule tables, either the packaged defaults or a user override file."""
    if path is None:
        return _rules()
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _words(text: str) -> list[str]:
    return re.findall(r"[a-z][a-z\-]*", text.lower())


def parse_instruction(raw: str, rules: dict | None = None) -> Instruction:
    """Identify garment class, length anchor, and optional start anchor.

    The length anchor comes from an "<anchor>-length" pattern; an optional
    "from <anchor>" clause overrides the garment's default start.
    """
    if not raw or not raw.strip():
        raise UnknownGarmentError("empty instruction")
    rules = rules or _rules()
    keywords = rules["garment_keywords"]
    synonyms = rules["anchor_synonyms"]
    lowered = raw.lower()

    garment_noun = None
    garment_class = None
    for word in _words(lowered):
        if word in keywords:
            garment_noun = word
            garment_class = keywords[word]
            break
    if garment_class is None:
        raise UnknownGarmentError(f"no garment keyword in {raw!r}")

    length_anchor = None
    m = re.search(r"([a-z]+)\s*-\s*length", lowered)
    if m:
        anchor_word = m.group(1)
        if anchor_word not in synonyms:
            raise UnknownAnchorError(f"unknown length anchor {anchor_word!r}")
        length_anchor = synonyms[anchor_word]

    start_override = None
    m = re.search(r"\bfrom\s+(?:the\s+)?([a-z]+)", lowered)
    if m:
        start_word = m.group(1)
        if start_word not in synonyms:
            raise UnknownAnchorError(f"unknown start anchor {start_word!r}")
        start_override = synonyms[start_word]

    return Instruction(
        raw=raw,
        garment_class=garment_class,
        garment_noun=garment_noun,
        length_anchor=length_anchor,
        start_override=start_override,
    )


def _rank(token: str) -> int:
    try:
        return ANATOMICAL_ORDER[token]
    except KeyError:
        raise UnknownAnchorError(f"token {token!r} has no place in the body order") from None


def expand_to_token_group(instr: Instruction, rules: dict | None = None) -> TokenGroup:
    """Expand a parsed instruction into its covered token set.

    Candidates come from the garment's coverage template; a candidate is kept
    when its body-order rank falls inside [start, end]. Arm-chain tokens are
    appended whenever the template includes arms: sleeves follow the arm, not
    the torso anchor.
    """
    rules = rules or _rules()
    template = rules["coverage_templates"][instr.garment_class]
    start = instr.start_override or template["start"]
    end = instr.length_anchor or template["default_end"]
    lo, hi = _rank(start), _rank(end)
    if lo > hi:
        raise InvalidRangeError(f"start anchor {start} sits below end anchor {end}")

    stars = [t for t in template["star_candidates"] if lo <= _rank(t) <= hi]
    fleshy = [t for t in template["fleshy_candidates"] if lo <= _rank(t) <= hi]
    if template["include_arms"]:
        stars.extend(t for t in template["arm_star_tokens"] if t not in stars)
        fleshy.extend(t for t in template["arm_fleshy_tokens"] if t not in fleshy)

    return TokenGroup(
        star_tokens=stars,
        fleshy_tokens=fleshy,
        clothes_tokens=[instr.garment_noun],
        start_anchor=start,
        end_anchor=end,
        include_arms=bool(template["include_arms"]),
        include_legs=bool(template["include_legs"]),
    )


def instruction_to_group(raw: str, rules: dict | None = None) -> TokenGroup:
    """Convenience composition of parse and expansion."""
    return expand_to_token_group(parse_instruction(raw, rules), rules)
