"""Dysarthric-to-dysarthric voice conversion toolkit.

Subpackages: dsp (audio and mel-cepstral features), diffcore (reverse-mode
autodiff), vqvae (hierarchical quantized autoencoder), plus corpus protocol
handling, listening-test statistics, and the command line front end.
"""

__version__ = "0.1.0"
