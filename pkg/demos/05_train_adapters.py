# %% [markdown]
# # Fine-tuning a frozen backbone with adapters
#
# A reduced version of the end-to-end experiment: pretrain the toy model on
# eight tone-band "languages", then adapt it to the four-class pair task
# with only adapters trainable and a random label map as the head.  Takes a
# few minutes on one core; the acceptance suite runs a larger version.

# %%
import logging
import time

import numpy as np

from pelspeech.audio import DESK, SynthConfig, synth_dialect
from pelspeech.model import ModelConfig
from pelspeech.pel import AdapterConfig, ScopeSelector, base_param_count
from pelspeech.train import (ClipDataset, HeadConfig, TrainConfig, evaluate_accuracy, prepare_model,
                             pretrain_backbone, report_for, train)

logging.basicConfig(level=logging.INFO, format="%(message)s")
t0 = time.time()
backbone = pretrain_backbone(ModelConfig(), seed=0)
print(f"pretrained in {time.time() - t0:.0f}s")

# %%
pairs = SynthConfig(layout="pairs", f_lo=150.0, f_hi=850.0, active_seconds=10.0)


def dataset(n, seed):
    rng = np.random.default_rng(seed)
    return ClipDataset([synth_dialect(c, 30.0, rng, pairs) for c in range(4) for _ in range(n)], DESK)


train_set, dev, test = dataset(300, 1), dataset(50, 2), dataset(50, 3)

# %%
cfg = TrainConfig(base_lr=1e-2, epochs=10, batch_size=32, samples_per_class=300,
                  selector=ScopeSelector("full", "adapters_only"), adapter=AdapterConfig(16),
                  head=HeadConfig("map"))
model = backbone.clone()
base = base_param_count(model)
head = prepare_model(model, cfg, 4)
print("frozen + random map:", evaluate_accuracy(model, head, test))
result = train(model, cfg, head, train_set, dev)
print(result.loss_csv())
print(report_for(model, head, cfg, dev, test, label="adapters-16", base_total=base).table_line())
