# %% [markdown]
# # Log-Mel frontend and synthetic dialects
#
# Clips are cut or zero-padded to a fixed window and turned into a
# normalised log-Mel matrix.  `DESK` is the small geometry used for
# training on one CPU core (16 mels x 150 frames from 30 s at 2 kHz);
# `SpectrogramConfig()` is the full 80 x 3000 geometry.

# %%
import numpy as np

from pelspeech.audio import (DESK, SpectrogramConfig, SynthConfig, band_energy_classifier, log_mel,
                             mel_centers, synth_dialect)

rng = np.random.default_rng(0)
clip = synth_dialect(2, 30.0, rng, SynthConfig(active=(8.0, 18.0)))
mel = log_mel(clip, DESK)
print(mel.shape, mel.dtype, "silence floor", DESK.silence_value)
print("reference geometry", SpectrogramConfig().mel_bins, "x", SpectrogramConfig().target_frames)

# %%
# Where is the energy?  Rows are mel bins, columns 5 frames per second.
centers = mel_centers(DESK)
profile = mel[:, 40:90].mean(axis=1) - mel[:, :40].mean(axis=1)
for hz, gain in zip(centers.round(), profile.round(2)):
    print(f"{hz:6.0f} Hz  {'#' * int(max(0, gain) * 20)}")

# %% [markdown]
# Two layouts exist.  `bands` gives each class its own tones.  `pairs`
# shares four tones between all classes and encodes the class only in
# which two of them sound *together*; the oracle has to look for
# co-occurrence.

# %%
pairs = SynthConfig(layout="pairs", f_lo=150.0, f_hi=850.0, active_seconds=10.0)
print([pairs.class_tones(c) for c in range(4)], pairs.band_grid())
hits = [band_energy_classifier(synth_dialect(i % 4, 30.0, rng, pairs), pairs) == i % 4 for i in range(40)]
print("oracle accuracy", np.mean(hits))
