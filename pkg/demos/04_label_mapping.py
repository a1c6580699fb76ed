# %% [markdown]
# # Reusing language tokens as dialect labels
#
# A label map assigns disjoint groups of existing vocabulary tokens to each
# dialect.  Group logits are summed and the sums go through a softmax.

# %%
import numpy as np

from pelspeech.labelmap import LabelMap, dialect_probs, predict_dialect, random_map

lmap = random_map(17, 2, range(1, 100), np.random.default_rng(0))
print(lmap.groups[:3], "...")

logits = np.random.default_rng(1).normal(0, 2, 128)
p = dialect_probs(logits, lmap).data
print(p.round(3), p.sum())
print("prediction", predict_dialect(logits, lmap))

# %%
# Adding a constant to every logit shifts each equal-sized group sum by the
# same amount, so the distribution does not move.
print(np.abs(dialect_probs(logits + 7.0, lmap).data - p).max())

# %%
# Ties go to the lowest dialect id
print(predict_dialect(np.array([3.0, 1.0, 3.0]), LabelMap.singletons([0, 1, 2])))
