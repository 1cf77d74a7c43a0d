from .specs import (
    DiscriminatorSpec,
    GeneratorSpec,
    NoiseSchedule,
    TrainConfig,
    VARIANTS,
    instance_noise_sigma,
)
from .networks import build_discriminator, build_generator
from .train import (
    Checkpoint,
    load_checkpoint,
    sample,
    train,
    train_vae,
)

__all__ = [
    "DiscriminatorSpec",
    "GeneratorSpec",
    "NoiseSchedule",
    "TrainConfig",
    "VARIANTS",
    "instance_noise_sigma",
    "build_discriminator",
    "build_generator",
    "Checkpoint",
    "load_checkpoint",
    "sample",
    "train",
    "train_vae",
]
