"""Network and training-schedule configuration.

The architecture scales from a toy setting (64 px inputs, 4 levels, up to
32 feature channels) used throughout the tests to a full-scale one
(512 px, 6 levels, up to 128 channels). Undocumented details follow these
conventions, recorded here rather than asserted against anything:
extractor channels double per level from `base_channels`, every estimator
shares one hidden width (which is what makes warm-starting a new level
from the previous one possible), displacement/transmission heads predict
residuals on top of the upsampled coarser estimate, and the initial
coarse-level estimate is zero displacement with unit transmission.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class NetConfig:
    input_size: int = 64
    max_level: int = 4
    base_channels: int = 8
    max_channels: int = 32
    search_range: int = 3
    estimator_hidden: int = 32
    estimator_depth: int = 5
    refiner_hidden: int = 32
    refiner_depth: int = 5
    leaky_slope: float = 0.1

    def __post_init__(self):
        if self.max_level < 2:
            raise ValueError("max_level must be >= 2")
        if self.search_range < 1:
            raise ValueError("search_range must be >= 1")
        if self.input_size % (2 ** (self.max_level - 1)) != 0:
            raise ValueError("input_size must be divisible by 2^(max_level-1)")

    def channels_at(self, level: int) -> int:
        """Extractor output channels at pyramid level `level` (2..max_level)."""
        return min(self.max_channels, self.base_channels * 2 ** (level - 2))

    @property
    def cost_planes(self) -> int:
        return (2 * self.search_range + 1) ** 2


def paper_scale_config() -> NetConfig:
    """Full-scale variant: 512 px inputs, 6 levels, channels up to 128."""
    return NetConfig(
        input_size=512,
        max_level=6,
        base_channels=8,
        max_channels=128,
        estimator_hidden=96,
        refiner_hidden=96,
    )


@dataclass(frozen=True)
class Stage:
    name: str
    min_level: int          # finest estimator level active (3 then 2)
    refiners: bool
    epochs: int
    batch_size: int
    learning_rate: float = 1e-4
    halve_every: int = 100  # epochs between learning-rate halvings


@dataclass(frozen=True)
class StageSchedule:
    stages: tuple

    def __post_init__(self):
        if not self.stages:
            raise ValueError("schedule needs at least one stage")


def default_schedule(epochs=(400, 600, 500), batch_sizes=(8, 8, 8)) -> StageSchedule:
    """Three stages: coarse levels only, add the finest level (warm-started
    from the level above), then enable the refiners."""
    return StageSchedule(
        (
            Stage("stage1", min_level=3, refiners=False,
                  epochs=epochs[0], batch_size=batch_sizes[0]),
            Stage("stage2", min_level=2, refiners=False,
                  epochs=epochs[1], batch_size=batch_sizes[1]),
            Stage("stage3", min_level=2, refiners=True,
                  epochs=epochs[2], batch_size=batch_sizes[2]),
        )
    )
