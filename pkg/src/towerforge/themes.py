"""Visual themes and per-floor lighting.

Rendering is symbolic: a theme does not load art, it permutes the 16-entry
palette so the same tile renders as a different code under each theme.
Lighting is sampled in quantized integer units so serialized floor plans are
byte-stable across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .rng import Stream


class VisualTheme(Enum):
    ANCIENT = "Ancient"
    MOORISH = "Moorish"
    INDUSTRIAL = "Industrial"
    MODERN = "Modern"
    FUTURE = "Future"


ALL_THEMES: tuple[VisualTheme, ...] = tuple(VisualTheme)

PALETTE_SIZE = 16

# Rotation applied to palette entries per theme.  Shifts are distinct mod 16,
# so a tile never shares a code across two themes.
THEME_SHIFT = {
    VisualTheme.ANCIENT: 0,
    VisualTheme.MOORISH: 3,
    VisualTheme.INDUSTRIAL: 6,
    VisualTheme.MODERN: 9,
    VisualTheme.FUTURE: 12,
}

LIGHT_BUCKETS = 4


@dataclass(frozen=True)
class LightingParams:
    """Quantized so floor plans serialize identically everywhere."""

    intensity_pct: int  # 20..100
    warmth_pct: int     # 0..100
    angle_deg: int      # 0..359

    def to_json(self) -> dict:
        return {
            "intensity_pct": self.intensity_pct,
            "warmth_pct": self.warmth_pct,
            "angle_deg": self.angle_deg,
        }

    @classmethod
    def from_json(cls, data: dict) -> "LightingParams":
        return cls(data["intensity_pct"], data["warmth_pct"], data["angle_deg"])


def theme_for_floor(
    tower_seed: int, floor: int, allowed: Sequence[VisualTheme] = ALL_THEMES
) -> VisualTheme:
    if not allowed:
        raise ValueError("empty theme set")
    ordered = [t for t in ALL_THEMES if t in set(allowed)]
    stream = Stream.for_tag(tower_seed, floor, "theme")
    return stream.choice(ordered)


def sample_lighting(tower_seed: int, floor: int) -> LightingParams:
    stream = Stream.for_tag(tower_seed, floor, "light")
    return LightingParams(
        intensity_pct=stream.randint(20, 100),
        warmth_pct=stream.randint(0, 100),
        angle_deg=stream.randint(0, 359),
    )


def light_bucket(lighting: LightingParams) -> int:
    """Collapse intensity into one of four brightness bands."""
    return min(LIGHT_BUCKETS - 1, (lighting.intensity_pct - 20) * LIGHT_BUCKETS // 81)


def palette_code(entry: int, theme: VisualTheme, bucket: int) -> int:
    """Observation byte for palette entry ``entry`` under a theme and light band.

    Codes stay under 256 (max 15 * 13 + 3 = 198) and never collide across
    entries, themes, or buckets within one floor.
    """
    if not 0 <= entry < PALETTE_SIZE:
        raise ValueError(f"palette entry {entry} out of range")
    if not 0 <= bucket < LIGHT_BUCKETS:
        raise ValueError(f"light bucket {bucket} out of range")
    rotated = (entry + THEME_SHIFT[theme]) % PALETTE_SIZE
    return rotated * 13 + bucket
