"""
Emotion-to-attribute mapping
============================

Summarize each emotion quadrant into concrete attribute values with the
three supervised-clustering variants, then binarize against corpus medians
to obtain the model's control bits.
"""

import numpy as np

from emomusic.features import default_catalog, extract_corpus
from emomusic.forest import ForestConfig, SelectionConfig, feature_importance, \
    select_attributes, train_forest
from emomusic.mapping import (
    EmotionQuadrant,
    LabeledCorpus,
    binarize,
    center_boundary_split,
    compute_mapping,
)
from emomusic.synth import SynthSpec, synth_score

spec = SynthSpec(noise=0.3)
scores, labels = [], []
for quadrant in EmotionQuadrant:
    for i in range(30):
        rng = np.random.default_rng([7, quadrant.value, i])
        scores.append(synth_score(spec, quadrant, rng))
        labels.append(quadrant)

catalog = default_catalog()
corpus = LabeledCorpus(extract_corpus(scores, catalog), labels)
forest = train_forest(corpus, ForestConfig(n_trees=100, seed=1))
indices = select_attributes(feature_importance(forest), catalog,
                            SelectionConfig("topk", k=8))
names = catalog.dim_names()
print("selected attributes:", [names[i] for i in indices])

for method in ("closest", "center", "kmeans"):
    table = compute_mapping(corpus, indices, method=method, seed=2)
    q1 = table.vector_for(EmotionQuadrant.Q1)
    print(f"\n{method}: Q1 -> {np.round(q1, 2)}")
    print(f"  bits: {binarize(q1, table.medians).tolist()}")

# closest returns a bitwise-real corpus row, the basis of its appeal
table = compute_mapping(corpus, indices, method="closest")
selected = corpus.matrix.values[:, indices]
is_row = any((table.vector_for(EmotionQuadrant.Q1) == row).all() for row in selected)
print("\nclosest vector is a real corpus row:", is_row)

split = center_boundary_split(corpus, indices, n=3)
center, boundary = split[EmotionQuadrant.Q1]
print(f"Q1 center samples (nearest to mean): {center}")
print(f"Q1 boundary samples (farthest):      {boundary}")
