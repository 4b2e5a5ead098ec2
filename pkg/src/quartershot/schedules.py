"""Training-schedule curves and pose losses as pure functions.

The three-stage recipe is expressed against a clock counted in training
images seen (13M total): stage 1 warms up on [0, 6M), stage 2 freezes the
generator-side pose predictor on [6M, 10M), and stage 3 ramps the neural
rendering resolution from 64 to 128 over [10M, 11M] and holds it afterward.
The pose-regularization weight starts at 0.5, holds through 0.2M images,
decays linearly to 0 at 0.4M; the conditioning-pose swap probability decays
linearly from 1.0 to 0.7 over the first 1M images and stays there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .body import BodyPose
from .errors import ValidationError

PREG_HOLD_END = 200_000
PREG_DECAY_END = 400_000
SWAP_DECAY_END = 1_000_000
STAGE1_END = 6_000_000
STAGE2_END = 10_000_000
RESOLUTION_RAMP_END = 11_000_000
TRAINING_END = 13_000_000

LAMBDA_PREG_START = 0.5
SWAP_PROB_START = 1.0
SWAP_PROB_FLOOR = 0.7
RESOLUTION_LOW = 64
RESOLUTION_HIGH = 128


@dataclass(frozen=True)
class TrainingClock:
    """Position in the training run, in images seen."""

    images_seen: int

    def __post_init__(self):
        if self.images_seen < 0:
            raise ValidationError("images_seen must be nonnegative")


@dataclass(frozen=True)
class StagePhase:
    stage: int
    preg_active: bool
    gamma_g_frozen: bool


def _images(clock) -> float:
    if isinstance(clock, TrainingClock):
        return float(clock.images_seen)
    if clock < 0:
        raise ValidationError("images_seen must be nonnegative")
    return float(clock)


def pose_loss(pose_a: BodyPose, pose_b: BodyPose, squared: bool = True) -> float:
    """Distance between two poses over their 6 components.

    Squared Euclidean by default; squared=False gives the root distance.
    """
    d = float(np.sum((pose_a.as_vector() - pose_b.as_vector()) ** 2))
    return d if squared else float(np.sqrt(d))


def pose_reg_loss(pose: BodyPose, coarse_pose: BodyPose, squared: bool = True) -> float:
    """Regularization toward the dataset's coarse pose; same metric as pose_loss."""
    return pose_loss(pose, coarse_pose, squared)


def lambda_preg(clock) -> float:
    """Pose-regularization weight: 0.5 through 0.2M images, linear to 0 at 0.4M."""
    t = _images(clock)
    if t <= PREG_HOLD_END:
        return LAMBDA_PREG_START
    if t >= PREG_DECAY_END:
        return 0.0
    return LAMBDA_PREG_START * (PREG_DECAY_END - t) / (PREG_DECAY_END - PREG_HOLD_END)


def swap_probability(clock) -> float:
    """Conditioning-pose swap probability: 1.0 to 0.7 over the first 1M images."""
    t = _images(clock)
    if t >= SWAP_DECAY_END:
        return SWAP_PROB_FLOOR
    frac = t / SWAP_DECAY_END
    return SWAP_PROB_START + (SWAP_PROB_FLOOR - SWAP_PROB_START) * frac


def neural_resolution(clock) -> int:
    """Rendering resolution: 64 below 10M images, a linear ramp (rounded to a
    multiple of 4) on [10M, 11M], then 128."""
    t = _images(clock)
    if t < STAGE2_END:
        return RESOLUTION_LOW
    if t >= RESOLUTION_RAMP_END:
        return RESOLUTION_HIGH
    frac = (t - STAGE2_END) / (RESOLUTION_RAMP_END - STAGE2_END)
    value = RESOLUTION_LOW + frac * (RESOLUTION_HIGH - RESOLUTION_LOW)
    return int(np.floor(value / 4.0 + 0.5)) * 4


def stage_of(clock) -> StagePhase:
    """Stage number plus the per-stage flags; clocks past the end of training
    stay in stage 3 with a warning."""
    t = _images(clock)
    if t > TRAINING_END:
        warnings.warn(f"clock {t:.0f} is past the end of training ({TRAINING_END})",
                      stacklevel=2)
    stage = 1 if t < STAGE1_END else (2 if t < STAGE2_END else 3)
    return StagePhase(stage, preg_active=t < PREG_DECAY_END, gamma_g_frozen=stage > 1)


def schedule_table(points=None) -> list[dict]:
    """Schedule values at the given clocks (defaults to the documented
    breakpoints); feeds the CLI report."""
    if points is None:
        points = [0, 100_000, PREG_HOLD_END, 300_000, PREG_DECAY_END, 500_000,
                  SWAP_DECAY_END, 3_000_000, STAGE1_END, 8_000_000, STAGE2_END,
                  10_500_000, RESOLUTION_RAMP_END, 12_000_000, TRAINING_END]
    rows = []
    for t in points:
        phase = stage_of(t)
        rows.append({
            "images_seen": int(t),
            "stage": phase.stage,
            "lambda_preg": lambda_preg(t),
            "swap_probability": swap_probability(t),
            "neural_resolution": neural_resolution(t),
            "preg_active": phase.preg_active,
            "gamma_g_frozen": phase.gamma_g_frozen,
        })
    return rows
