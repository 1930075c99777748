"""Instruction parsing and coverage expansion."""

from __future__ import annotations

import pytest

from posestar.errors import InvalidRangeError, UnknownAnchorError, UnknownGarmentError
from posestar.instruction import (
    ANATOMICAL_ORDER,
    expand_to_token_group,
    instruction_to_group,
    parse_instruction,
)


def test_belly_length_blouse_parse():
    instr = parse_instruction("belly-length blouse")
    assert instr.garment_class == "blouse_shirt"
    assert instr.length_anchor == "Belly"


def test_knee_length_skirt_parse():
    instr = parse_instruction("knee-length skirt")
    assert instr.garment_class == "pants_skirt"
    assert instr.length_anchor == "Knee"


def test_unknown_garment():
    with pytest.raises(UnknownGarmentError):
        parse_instruction("sofa")


def test_unknown_anchor():
    with pytest.raises(UnknownAnchorError):
        parse_instruction("xyzzy-length blouse")


def test_synonyms_resolve():
    assert parse_instruction("tummy-length shirt").length_anchor == "Belly"
    assert parse_instruction("stomach-length top").length_anchor == "Belly"


def test_blouse_belly_expansion():
    group = instruction_to_group("belly-length blouse")
    assert set(group.star_tokens) == {"Neck", "Shoulder", "Elbow", "Wrist"}
    assert set(group.fleshy_tokens) == {"Chest", "Waist", "Belly", "Arms"}
    assert group.clothes_tokens == ["blouse"]
    assert group.include_arms and not group.include_legs


def test_pants_knee_expansion():
    group = instruction_to_group("knee-length skirt")
    assert set(group.star_tokens) == {"Hip", "Knee"}
    assert set(group.fleshy_tokens) == {"Waist", "Thigh"}
    assert group.include_legs and not group.include_arms
    assert group.start_anchor == "Waist"


def test_dress_ankle_expansion():
    group = instruction_to_group("ankle-length dress")
    assert set(group.star_tokens) == {"Neck", "Shoulder", "Hip", "Knee", "Ankle"}
    assert set(group.fleshy_tokens) == {"Chest", "Waist", "Belly", "Torso", "Thigh", "Shank"}
    assert group.include_legs


def test_determinism():
    a = instruction_to_group("belly-length blouse")
    b = instruction_to_group("belly-length blouse")
    assert a == b


def test_monotone_coverage():
    """Extending the anchor downward never loses tokens."""
    order = ["Chest", "Waist", "Belly", "Hip"]
    prev_star, prev_fleshy = set(), set()
    for anchor in order:
        group = instruction_to_group(f"{anchor.lower()}-length blouse")
        stars, fleshy = set(group.star_tokens), set(group.fleshy_tokens)
        assert prev_star <= stars
        assert prev_fleshy <= fleshy
        prev_star, prev_fleshy = stars, fleshy


def test_invalid_range():
    instr = parse_instruction("neck-length skirt")  # skirt starts at the waist
    with pytest.raises(InvalidRangeError):
        expand_to_token_group(instr)


def test_from_clause_overrides_start():
    instr = parse_instruction("knee-length dress from the waist")
    assert instr.start_override == "Waist"
    group = expand_to_token_group(instr)
    assert "Neck" not in group.star_tokens
    assert "Chest" not in group.fleshy_tokens


def test_default_length_anchor():
    group = instruction_to_group("blouse")
    assert group.end_anchor == "Hip"


def test_every_star_token_has_keypoints():
    from posestar.localization import STAR_KEYPOINTS

    for instr in ("belly-length blouse", "knee-length skirt", "ankle-length dress"):
        group = instruction_to_group(instr)
        for token in group.star_tokens:
            assert token in STAR_KEYPOINTS


def test_every_fleshy_token_has_anchor_rule():
    from posestar.localization import default_anchor_table

    table = default_anchor_table()
    for instr in ("belly-length blouse", "knee-length skirt", "ankle-length dress"):
        group = instruction_to_group(instr)
        for token in group.fleshy_tokens:
            assert table.rules_for(token), token


def test_anatomical_order_sanity():
    assert ANATOMICAL_ORDER["Neck"] < ANATOMICAL_ORDER["Waist"] < ANATOMICAL_ORDER["Knee"]
    assert ANATOMICAL_ORDER["Wrist"] == ANATOMICAL_ORDER["Hip"]
