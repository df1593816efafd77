"""Per-step difficulty schedules for the three presentation protocols.

A schedule assigns one difficulty value per training step on one of two
channels: the fading factor phi (easy = larger phi, base 1) or the noise
level sigma (easy = smaller sigma, base sigma_hard).  The curriculum ramps
linearly from the easy extreme to the base value over the first fraction
``alpha`` of the steps; random order presents exactly the same multiset of
values, uniformly shuffled; no-fading keeps the base value throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CURRICULUM = "curriculum"
CURRICULUM_DISCRETE = "curriculum-discrete"
RANDOM_ORDER = "random-order"
NO_FADING = "no-fading"
KINDS = (CURRICULUM, CURRICULUM_DISCRETE, RANDOM_ORDER, NO_FADING)

FADING_CHANNEL = "fading-factor"
NOISE_CHANNEL = "noise-level"
CHANNELS = (FADING_CHANNEL, NOISE_CHANNEL)


@dataclass(frozen=True)
class Schedule:
    """Immutable difficulty assignment for total_steps presentation steps.

    easy_value / base_value are the channel's easy extreme and default
    (phi_max and 1 for fading; sigma_easy and sigma_hard for noise).  For the
    discrete kind, ``levels`` evenly-spaced stage values split the easy window
    into equal-duration stages.  random-order shuffles the curriculum's value
    sequence with ``permutation_seed``.
    """

    kind: str
    total_steps: int
    channel: str = FADING_CHANNEL
    easy_value: float = 3.0
    base_value: float = 1.0
    alpha: float = 0.1
    levels: int = 0
    permutation_seed: int = 0
    _values: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown difficulty channel {self.channel!r}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.kind == CURRICULUM_DISCRETE and self.levels < 1:
            raise ValueError("discrete curriculum needs levels >= 1")
        object.__setattr__(self, "_values", self._expand())

    def _ramp(self) -> np.ndarray:
        """Per-step values of the (continuous or discrete) curriculum."""
        t = np.arange(self.total_steps, dtype=float)
        window = self.alpha * self.total_steps
        vals = np.full(self.total_steps, self.base_value)
        if self.kind == NO_FADING:
            return vals
        in_window = t < window
        if self.kind == CURRICULUM_DISCRETE:
            # stage j of `levels` equal stages takes the j-th evenly spaced
            # value between the easy extreme and the base value
            stage = np.floor(t[in_window] / window * self.levels).astype(int)
            step_values = self.easy_value + (self.base_value - self.easy_value) * (
                np.arange(self.levels) / self.levels
            )
            vals[in_window] = step_values[stage]
        else:
            vals[in_window] = self.easy_value + (
                (self.base_value - self.easy_value) * t[in_window] / window
            )
        return vals

    def _expand(self) -> np.ndarray:
        if self.kind == RANDOM_ORDER:
            base = self._ramp_as_curriculum()
            perm = np.random.default_rng(self.permutation_seed).permutation(
                self.total_steps
            )
            return base[perm]
        return self._ramp()

    def _ramp_as_curriculum(self) -> np.ndarray:
        """The curriculum value sequence whose multiset random-order replays."""
        ref = Schedule(
            kind=CURRICULUM if self.levels == 0 else CURRICULUM_DISCRETE,
            total_steps=self.total_steps,
            channel=self.channel,
            easy_value=self.easy_value,
            base_value=self.base_value,
            alpha=self.alpha,
            levels=self.levels,
        )
        return ref.values()

    def values(self) -> np.ndarray:
        """Full per-step difficulty sequence (read-only view)."""
        v = self._values.view()
        v.flags.writeable = False
        return v

    def difficulty_at(self, step: int) -> float:
        if not 0 <= step < self.total_steps:
            raise IndexError(
                f"step {step} outside schedule of {self.total_steps} steps"
            )
        return float(self._values[step])


def multiset_check(a: Schedule, b: Schedule) -> bool:
    """True iff the two schedules present identical difficulty multisets."""
    if a.total_steps != b.total_steps:
        raise ValueError("schedules must have the same total_steps")
    return bool(np.array_equal(np.sort(a.values()), np.sort(b.values())))


def make_schedule(
    protocol: str,
    total_steps: int,
    channel: str = FADING_CHANNEL,
    phi_max: float = 3.0,
    sigma_easy: float = 0.1,
    sigma_hard: float = 0.4,
    alpha: float = 0.1,
    easy_samples: int | None = None,
    levels: int = 0,
    permutation_seed: int = 0,
) -> Schedule:
    """Build a protocol schedule from experiment-level parameters.

    easy_samples, when given, fixes the absolute length of the easy window
    (alpha = easy_samples / total_steps), the fixed-budget comparison mode.
    """
    if easy_samples is not None:
        alpha = easy_samples / total_steps
    if channel == FADING_CHANNEL:
        easy, base = phi_max, 1.0
    else:
        easy, base = sigma_easy, sigma_hard
    kind = protocol
    if protocol == CURRICULUM and levels > 0:
        kind = CURRICULUM_DISCRETE
    return Schedule(
        kind=kind,
        total_steps=total_steps,
        channel=channel,
        easy_value=easy,
        base_value=base,
        alpha=alpha,
        levels=levels if kind in (CURRICULUM_DISCRETE, RANDOM_ORDER) else 0,
        permutation_seed=permutation_seed,
    )
