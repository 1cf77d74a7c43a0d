"""Architecture and training configuration for the generator zoo.

All variants share one skeleton: a 512-d Gaussian latent is expanded to
512 feature maps of size 25x8, then five convolutional blocks (two 3x3
stride-1 convs with a bilinear 2x upsample in between) double width and
height up to 800x256, halving the feature maps over the last three blocks.
A final convolution produces the grayscale image. The discriminator mirrors
this with stride-2 downsampling and a two-layer 512-wide fully connected
head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

VARIANTS = ("dcgan", "stylegan", "pg_stylegan", "stylegan2")

LATENT_DIM = 512
BASE_SHAPE = (25, 8)
FULL_CHANNELS = (512, 512, 256, 128, 64)
FULL_BLOCKS = 5


@dataclass(frozen=True)
class GeneratorSpec:
    variant: str
    base_shape: tuple[int, int] = BASE_SHAPE
    base_channels: int = 512
    n_blocks: int = FULL_BLOCKS
    channel_schedule: tuple[int, ...] = FULL_CHANNELS
    output_resolution: tuple[int, int] = (800, 256)
    latent_dim: int = LATENT_DIM

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if len(self.channel_schedule) != self.n_blocks:
            raise ValueError("channel_schedule length must equal n_blocks")
        h = self.base_shape[0] * 2**self.n_blocks
        w = self.base_shape[1] * 2**self.n_blocks
        if (h, w) != tuple(self.output_resolution):
            raise ValueError(
                f"base {self.base_shape} doubled {self.n_blocks} times is "
                f"({h}, {w}), not {self.output_resolution}"
            )
        # feature maps halve over the trailing blocks of the schedule
        tail = self.channel_schedule[-min(3, self.n_blocks):]
        for a, b in zip(tail, tail[1:]):
            if b * 2 != a and not a == b == 8:  # 8 is the channel floor
                raise ValueError("channel schedule must halve in the last blocks")

    @property
    def n_stages(self) -> int:
        """Progressive stages: base resolution plus one per block."""
        return self.n_blocks + 1

    def stage_resolution(self, stage: int) -> tuple[int, int]:
        """Output resolution at 1-indexed progressive stage."""
        if not 1 <= stage <= self.n_stages:
            raise ValueError(f"stage must be in [1, {self.n_stages}]")
        f = 2 ** (stage - 1)
        return (self.base_shape[0] * f, self.base_shape[1] * f)

    @classmethod
    def create(cls, variant: str, resolution_scale: float = 1.0,
               channel_scale: float = 1.0) -> "GeneratorSpec":
        """Spec for a (possibly reduced-scale) pyramid.

        resolution_scale must be a power-of-two fraction; it removes whole
        blocks from the top of the pyramid. channel_scale shrinks every
        channel count (floor 8) so toy runs fit desk hardware.
        """
        k = math.log2(resolution_scale)
        if abs(k - round(k)) > 1e-9 or round(k) > 0:
            raise ValueError("resolution_scale must be 1, 1/2, 1/4, ...")
        n_blocks = FULL_BLOCKS + int(round(k))
        if n_blocks < 1:
            raise ValueError("resolution_scale removes every block")
        sched = tuple(max(8, int(c * channel_scale)) for c in FULL_CHANNELS[-n_blocks:])
        base_ch = max(8, int(512 * channel_scale))
        out = (BASE_SHAPE[0] * 2**n_blocks, BASE_SHAPE[1] * 2**n_blocks)
        return cls(variant=variant, base_channels=base_ch, n_blocks=n_blocks,
                   channel_schedule=sched, output_resolution=out)


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Mirror of a GeneratorSpec with stride-2 downsampling and a 512-wide head."""

    generator: GeneratorSpec
    head_width: int = 512

    @property
    def input_resolution(self) -> tuple[int, int]:
        return self.generator.output_resolution

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        """Shape of the designated intermediate feature layer (C, H, W)."""
        g = self.generator
        return (g.base_channels, g.base_shape[0], g.base_shape[1])


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear instance-noise anneal: sigma0 at start_step down to 0."""

    sigma0: float = 0.2
    total_steps: int = 10_000
    start_step: int = 0

    def __post_init__(self):
        if self.sigma0 < 0 or self.total_steps < 0 or self.start_step < 0:
            raise ValueError("schedule parameters must be non-negative")


def instance_noise_sigma(step: int, sched: NoiseSchedule) -> float:
    """Noise sigma at a training step."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if sched.total_steps == 0:
        return 0.0
    if step < sched.start_step:
        return sched.sigma0
    return sched.sigma0 * max(0.0, 1.0 - (step - sched.start_step) / sched.total_steps)


@dataclass
class TrainConfig:
    alpha: float = 0.001
    batch_size: int | list[int] = 30
    instance_noise_steps: int = 10_000
    max_steps: int = 10_000
    seed: int = 0
    checkpoint_every: int = 1000
    resolution_scale: float = 1.0
    channel_scale: float = 1.0
    fade_frac: float = 0.5   # fraction of each progressive stage spent fading in
    r1_gamma: float = 10.0
    r1_interval: int = 16
    pl_interval: int = 8
    pl_weight: float = 2.0
    adam_betas: tuple[float, float] = (0.0, 0.99)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        sizes = self.batch_size if isinstance(self.batch_size, list) else [self.batch_size]
        if any(b < 1 for b in sizes):
            raise ValueError("batch sizes must be >= 1")
        if self.instance_noise_steps < 0:
            raise ValueError("instance_noise_steps must be >= 0")

    def batch_for_stage(self, stage: int) -> int:
        if isinstance(self.batch_size, list):
            return self.batch_size[min(stage - 1, len(self.batch_size) - 1)]
        return self.batch_size


CONFIG_KEYS = {
    "alpha": float,
    "batch_size": int,
    "batch_schedule": str,
    "instance_noise_steps": int,
    "max_steps": int,
    "seed": int,
    "checkpoint_every": int,
    "resolution_scale": float,
    "channel_scale": float,
}


def parse_train_config(text: str) -> TrainConfig:
    """Parse the flat key=value config format."""
    kwargs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key == "batch_schedule":
            kwargs["batch_size"] = [int(v) for v in value.split(",")]
        else:
            kwargs[key] = CONFIG_KEYS[key](value)
    return TrainConfig(**kwargs)
