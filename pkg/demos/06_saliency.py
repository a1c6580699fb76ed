# %% [markdown]
# # Occlusion saliency
#
# Patches of the spectrogram are replaced by a fill value and the drop in
# the predicted class probability is spread over the masked cells.  A probe
# classifier that only looks at frames 60-110 makes the behaviour easy to
# see; `model_prob_fn(model, head)` plugs a trained model in instead.

# %%
import numpy as np

from pelspeech.saliency import SaliencyConfig, mask_diff, mass_fraction, occlusion_map, save_pgm


def probe(batch):
    s = batch[:, 4:12, 60:110].mean(axis=(1, 2))
    p = 1 / (1 + np.exp(-4 * s))
    return np.stack([p, 1 - p], axis=1)


rng = np.random.default_rng(0)
mel = 0.1 * rng.standard_normal((16, 150))
mel[4:12, 60:110] += 1.0
cfg = SaliencyConfig(patch_mels=4, patch_frames=10)
smap = occlusion_map(probe, mel, cfg)
print("baseline p", round(smap.baseline_prob, 3), "mass in frames 60-110:", round(mass_fraction(smap.values, (60, 110)), 3))

# %%
# Coarse text rendering, one character per 2 mels x 5 frames
for row in smap.values[::-2].reshape(8, 1, 150)[:, 0, ::5]:
    print("".join(" .:-=+*#%@"[min(9, int(v * 10))] for v in row))

# %%
median = occlusion_map(probe, mel, SaliencyConfig(4, 10, fill_value="median"))
print("mean |silence fill - median fill|", np.abs(mask_diff(smap, median)).mean().round(3))
import tempfile
out = tempfile.mkdtemp() + "/saliency_demo.pgm"
save_pgm(out, smap.values, 0.0, 1.0)
print("wrote", out)
