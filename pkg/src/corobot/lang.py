"""Instruction parsing: spoken operator text into structured semantics.

The parser extracts just enough structure for the oracle reasoner and the
consistency check; the raw text always travels alongside the parse so a
remote reasoner sees exactly what the operator said. Anything the rules do
not recognize parses as Unknown, never as an error.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .scene import Vec3

# Workcell coordinate conventions, as presented to reasoners:
# Front = -z, Back = +z, Left = +x, Right = -x, Up = +y, Down = -y
SEED_DIRECTIONS: dict[str, tuple[str, int]] = {
    "front": ("z", -1),
    "back": ("z", +1),
    "left": ("x", +1),
    "right": ("x", -1),
    "up": ("y", +1),
    "higher": ("y", +1),
    "down": ("y", -1),
    "lower": ("y", -1),
}

AXIS_VECTORS: dict[str, Vec3] = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}

BIGGER_WORDS = ("bigger", "larger")
SMALLER_WORDS = ("smaller",)
DONE_WORDS = ("done", "finished")
SLIGHT_PHRASES = ("a little", "a bit", "slightly")
LARGE_PHRASES = ("much", "a lot", "way")

# Most specific first: a bit-kind word beats the generic noun.
SEED_TOOL_FRAGMENTS = ("phillips", "hex", "screwdriver", "driver", "tool")


@dataclass(frozen=True)
class DirectionLexicon:
    """Word to (axis, sign) mapping plus the tool-name fragments the parser knows."""

    words: dict[str, tuple[str, int]] = field(default_factory=lambda: dict(SEED_DIRECTIONS))
    tool_fragments: tuple[str, ...] = SEED_TOOL_FRAGMENTS

    def axis_vector(self, axis: str) -> Vec3:
        return AXIS_VECTORS[axis]

    def extended(self, doc: dict[str, Any]) -> "DirectionLexicon":
        """New lexicon with extra words merged over the seeded vocabulary.

        Document shape: {word: {"axis": "x"|"y"|"z", "sign": 1|-1}}.
        """
        merged = dict(self.words)
        for word, entry in doc.items():
            try:
                axis = entry["axis"]
                sign = int(entry["sign"])
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"bad lexicon entry for {word!r}: {e}") from e
            if axis not in AXIS_VECTORS or sign not in (-1, 1):
                raise ConfigError(f"bad lexicon entry for {word!r}: axis {axis!r}, sign {sign!r}")
            merged[word.lower()] = (axis, sign)
        return DirectionLexicon(words=merged, tool_fragments=self.tool_fragments)

    @classmethod
    def from_file(cls, path: str | Path) -> "DirectionLexicon":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot load lexicon {path}: {e}") from e
        return cls().extended(doc)


DEFAULT_LEXICON = DirectionLexicon()


@dataclass(frozen=True)
class ParsedInstruction:
    """Structured reading of one utterance; raw text preserved verbatim.

    kind: directional | comparative | tool_by_name | done | unknown.
    Directional carries axis/sign/magnitude, comparative carries the ordering
    direction over bit_size, tool_by_name carries the matched name fragment.
    """

    raw: str
    kind: str
    axis: str | None = None
    sign: int | None = None
    magnitude: str | None = None  # slight | default | large
    direction: str | None = None  # bigger | smaller
    fragment: str | None = None

    @property
    def is_done(self) -> bool:
        return self.kind == "done"

    def axis_sign_vector(self) -> Vec3:
        assert self.kind == "directional" and self.axis is not None and self.sign is not None
        base = AXIS_VECTORS[self.axis]
        return (base[0] * self.sign, base[1] * self.sign, base[2] * self.sign)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"raw": self.raw, "kind": self.kind}
        if self.kind == "directional":
            out |= {"axis": self.axis, "sign": self.sign, "magnitude": self.magnitude}
        elif self.kind == "comparative":
            out |= {"attribute": "bit_size", "direction": self.direction}
        elif self.kind == "tool_by_name":
            out |= {"fragment": self.fragment}
        return out


def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9']+", text.lower())


def _magnitude(lowered: str) -> str:
    if any(p in lowered for p in SLIGHT_PHRASES):
        return "slight"
    if any(p in lowered for p in LARGE_PHRASES):
        return "large"
    return "default"


def parse_instruction(text: str, lexicon: DirectionLexicon = DEFAULT_LEXICON) -> ParsedInstruction:
    """Rule cascade: Done > Comparative > Directional > ToolByName > Unknown.

    Directional takes the last lexicon word in the utterance: arm words shadow
    direction words ("raise the left a bit higher" means up, not left), and the
    final word is the operative one when both appear.
    """
    toks = _tokens(text)
    lowered = " ".join(toks)

    if any(t in DONE_WORDS for t in toks):
        return ParsedInstruction(raw=text, kind="done")

    for t in toks:
        if t in BIGGER_WORDS:
            return ParsedInstruction(raw=text, kind="comparative", direction="bigger")
        if t in SMALLER_WORDS:
            return ParsedInstruction(raw=text, kind="comparative", direction="smaller")

    directional = [t for t in toks if t in lexicon.words]
    if directional:
        axis, sign = lexicon.words[directional[-1]]
        return ParsedInstruction(raw=text, kind="directional", axis=axis, sign=sign, magnitude=_magnitude(lowered))

    for fragment in lexicon.tool_fragments:
        if fragment in toks:
            return ParsedInstruction(raw=text, kind="tool_by_name", fragment=fragment)

    return ParsedInstruction(raw=text, kind="unknown")
