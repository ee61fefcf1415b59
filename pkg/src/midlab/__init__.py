"""Desk-scale MiddleGAN laboratory: a one-generator, two-discriminator GAN,
brute-force divergence oracles, and a toy domain-adaptation pipeline."""

__version__ = "0.1.0"
