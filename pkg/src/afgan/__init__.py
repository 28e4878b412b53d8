"""Self-supervised GAN image detection from autoencoder fingerprints.

Autoencoders trained on real images only produce reconstructions whose
upsampling paths leave spectral artifacts; a small classifier over 2D spectra
learns to tell those reconstructions from the originals and transfers to
images from actual GANs.
"""

from afgan._kernels import BACKEND
from afgan.config import ConfigError, RunConfig

__all__ = ["BACKEND", "ConfigError", "RunConfig"]
__version__ = "0.1.0"
