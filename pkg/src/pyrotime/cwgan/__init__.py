"""Conditional Wasserstein GAN: networks, losses and training."""
from .losses import Losses, critic_objective, gradient_check, gradient_penalty, wgan_losses
from .networks import (
    CIN, Critic, CriticConfig, DenseBlock, Down, Generator, GeneratorConfig, NetworkParams, Up,
    build_networks, config_for_size, critic_forward, generator_forward,
)
from .training import (
    PairStore, TrainConfig, TrainingDiverged, load_checkpoint, make_optimizers, save_checkpoint,
    train, validation_mismatch,
)

__all__ = [
    "CIN", "Critic", "CriticConfig", "DenseBlock", "Down", "Generator", "GeneratorConfig",
    "Losses", "NetworkParams", "PairStore", "TrainConfig", "TrainingDiverged", "Up",
    "build_networks", "config_for_size", "critic_forward", "critic_objective", "generator_forward",
    "gradient_check", "gradient_penalty", "load_checkpoint", "make_optimizers", "save_checkpoint",
    "train", "validation_mismatch", "wgan_losses",
]
