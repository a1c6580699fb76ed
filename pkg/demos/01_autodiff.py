# %% [markdown]
# # Reverse-mode autodiff on numpy
#
# Every model in the package is built from `pelspeech.autodiff.Tensor`.
# Here we differentiate a small two-layer network and compare against
# central finite differences.

# %%
import numpy as np

from pelspeech import autodiff as ad
from pelspeech.autodiff import Tensor, numerical_grad, relative_error

rng = np.random.default_rng(0)
x = Tensor(rng.standard_normal((5, 3)), dtype=np.float64)
w1 = Tensor(rng.standard_normal((3, 8)), requires_grad=True, dtype=np.float64)
w2 = Tensor(rng.standard_normal((8, 4)), requires_grad=True, dtype=np.float64)
labels = rng.integers(0, 4, 5)


def loss():
    h = ad.gelu(ad.linear(x, w1))
    return ad.cross_entropy(ad.linear(h, w2), labels)


loss().backward()
print("loss", loss().item())

# %%
# Analytic vs numeric, norm-wise relative error
for name, t in (("w1", w1), ("w2", w2)):
    print(name, f"{relative_error(t.grad, numerical_grad(loss, t)):.2e}")

# %% [markdown]
# A few steps of AdamW with the linear schedule used by the trainer.

# %%
reg = ad.ParamRegistry()
reg.add("w1", w1)
reg.add("w2", w2)
state = ad.OptimizerState(lr=1e-2)
for epoch in range(20):
    reg.zero_grad()
    loss().backward()
    ad.adam_step(reg, state, ad.linear_lr(epoch, 20, 1e-2))
print("after 20 steps", loss().item())
