# %% [markdown]
# # Adapters, reprogramming and scopes
#
# The three mechanisms only ever add parameters or flip trainable flags on
# a `ParamRegistry`; nothing else about the model changes.

# %%
import numpy as np

from pelspeech import autodiff as ad
from pelspeech.model import ModelConfig, TransformerModel, extend_vocab
from pelspeech.pel import (AdapterConfig, ReprogramDelta, ScopeSelector, adapter_param_count, apply_scope,
                           attach_reprogram, base_param_count, count_params, insert_adapters)

model = TransformerModel.init(ModelConfig(), np.random.default_rng(0))
x = np.random.default_rng(1).standard_normal((4, 16, 150)).astype(np.float32)
with ad.no_grad():
    before = model.first_logits(x).data
print("backbone parameters", base_param_count(model))

# %%
insert_adapters(model, AdapterConfig(bottleneck=16), np.random.default_rng(2))
attach_reprogram(model, ReprogramDelta.zeros(16, 150))
new_ids = extend_vocab(model, 4, np.random.default_rng(3))
with ad.no_grad():
    after = model.first_logits(x).data
print("original logits unchanged:", np.array_equal(before, after[:, :128]), "new ids", new_ids)

# %%
for scope in ("full:all", "encoder:all", "decoder:all", "full:bias_only", "encoder:bias_only",
              "decoder:bias_only", "full:adapters_only", "full:reprogram_only"):
    sel = ScopeSelector.parse(scope)
    n = count_params(model, sel)
    print(f"{scope:22s} {n:8d}  {100 * n / base_param_count(model):6.2f}%")

# %%
# At the reference width a 64-wide adapter costs 66,112 parameters per site
print(adapter_param_count(512, 64, 1), adapter_param_count(512, 64, 6))

# %%
result = apply_scope(model.registry, ScopeSelector("encoder", "adapters_only"))
print(result.count, "trainable;", [n for n in result.names][:2], "...")
