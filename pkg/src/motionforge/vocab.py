"""Fixed label vocabulary and palettes.

Desk-scale substitute for the frozen text encoder: entity labels and a small
set of motion words map to indices in one embedding table. Object colors and
overlay colors are disjoint palettes so that color-threshold box recovery on
generated frames can never latch onto overlay strokes.
"""

from __future__ import annotations

from typing import List

# object labels, aligned index-for-index with OBJECT_PALETTE
OBJECT_LABELS: List[str] = ["red cube", "green cube", "blue cube", "yellow cube"]

# saturated u8 colors (converted to [0,1]); mutual distances far above the
# recovery tolerance of 60/255
OBJECT_PALETTE = [
    (230 / 255.0, 40 / 255.0, 40 / 255.0),
    (40 / 255.0, 200 / 255.0, 60 / 255.0),
    (50 / 255.0, 90 / 255.0, 230 / 255.0),
    (235 / 255.0, 210 / 255.0, 40 / 255.0),
]

# box-outline colors, deliberately outside OBJECT_PALETTE
OVERLAY_PALETTE = [
    (255 / 255.0, 0.0, 255 / 255.0),
    (0.0, 255 / 255.0, 255 / 255.0),
    (255 / 255.0, 150 / 255.0, 0.0),
]

_MOTION_WORDS = [
    "static", "pans", "dollies", "orbits", "drifts", "left", "right", "up",
    "down", "forward", "backward", "camera", "moves", "circles", "holds",
    "still", "while", "the", "a", "scene", "and",
]

UNK = "<unk>"
WORDS: List[str] = [UNK] + OBJECT_LABELS + _MOTION_WORDS
VOCAB_SIZE = len(WORDS)
_INDEX = {w: i for i, w in enumerate(WORDS)}

MAX_CAPTION_TOKENS = 16


def label_index(label: str) -> int:
    """Index of an entity label; unknown labels map to <unk>."""
    return _INDEX.get(label, 0)


def object_color(label_idx: int):
    """Palette color for an entity label index (labels occupy indices 1..)."""
    return OBJECT_PALETTE[(label_idx - 1) % len(OBJECT_PALETTE)]


def overlay_color(object_id: int):
    return OVERLAY_PALETTE[object_id % len(OVERLAY_PALETTE)]


def tokenize_caption(caption: str) -> List[int]:
    """Greedy longest-match tokenization against the fixed vocabulary."""
    words = caption.lower().replace(",", " ").replace(".", " ").split()
    tokens: List[int] = []
    i = 0
    while i < len(words) and len(tokens) < MAX_CAPTION_TOKENS:
        # try two-word entries ("red cube") before single words
        if i + 1 < len(words) and " ".join(words[i:i + 2]) in _INDEX:
            tokens.append(_INDEX[" ".join(words[i:i + 2])])
            i += 2
            continue
        tokens.append(_INDEX.get(words[i], 0))
        i += 1
    return tokens
