"""Frozen synthetic two-speaker dataset for training and conversion tests.

Speaker identity is a small constant per-channel offset (+/- OFFSET);
content is zero-mean over time (whole sine periods), so an utterance's
mean frame isolates the speaker component. The offset is deliberately
small relative to the content so the quantizer bottleneck does not absorb
it and the decoder must rely on the speaker embedding.
"""

import numpy as np

from pathovc import vqvae

N_PER_SPEAKER = 8
N_FRAMES = 64
N_CHANNELS = 16

TOY_MODEL = dict(in_channels=N_CHANNELS, hidden=32, latent_dim=8,
                 codebook_size=8, embed_dim=4)
TOY_TRAINING = dict(steps=200, batch_size=8, crop_frames=64,
                    learning_rate=5e-3, seed=3)
MODEL_SEED = 1


def speaker_offsets():
    c = np.arange(N_CHANNELS)
    off_a = 0.4 * np.cos(np.pi * c / N_CHANNELS + 0.7)
    return off_a, -off_a


def make_two_speaker_dataset():
    """Returns (data, off_a, off_b); data is [(speaker_id, frames)]."""
    rng = np.random.default_rng(7)
    off_a, off_b = speaker_offsets()
    profiles = rng.normal(size=(4, N_CHANNELS))

    def utt(off, i):
        tt = np.arange(N_FRAMES)[:, None]
        period = [8.0, 16.0, 32.0][i % 3]
        phase = [0.0, np.pi / 2, np.pi, 3 * np.pi / 2][i % 4]
        content = 1.5 * np.sin(2 * np.pi * tt / period + phase) * profiles[i % 4][None, :]
        return (content + off[None, :]).astype(np.float32)

    data = [("A", utt(off_a, i)) for i in range(N_PER_SPEAKER)]
    data += [("B", utt(off_b, i)) for i in range(N_PER_SPEAKER)]
    return data, off_a, off_b


def train_toy_model():
    """Deterministic 200-step training run on the frozen dataset."""
    data, off_a, off_b = make_two_speaker_dataset()
    model = vqvae.HVqVaeModel(vqvae.VqVaeConfig(**TOY_MODEL), ["A", "B"],
                              seed=MODEL_SEED)
    model, report = vqvae.train(model, data, vqvae.TrainingConfig(**TOY_TRAINING))
    return model, report, data, off_a, off_b
