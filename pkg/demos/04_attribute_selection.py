"""
Emotion-related attribute design
================================

Train a random forest on a labeled corpus and rank the catalog by feature
importance; the top-k dimensions become the control attributes.
"""

import numpy as np

from emomusic.features import default_catalog, extract_corpus
from emomusic.forest import (
    ForestConfig,
    SelectionConfig,
    feature_importance,
    oob_accuracy,
    select_attributes,
    train_forest,
)
from emomusic.mapping import EmotionQuadrant, LabeledCorpus
from emomusic.synth import SynthSpec, synth_score

rng_seed = 0
spec = SynthSpec(noise=0.3)
scores, labels = [], []
for quadrant in EmotionQuadrant:
    for i in range(40):
        rng = np.random.default_rng([rng_seed, quadrant.value, i])
        scores.append(synth_score(spec, quadrant, rng))
        labels.append(quadrant)

catalog = default_catalog()
corpus = LabeledCorpus(extract_corpus(scores, catalog), labels)

forest = train_forest(corpus, ForestConfig(n_trees=150, seed=1))
print(f"out-of-bag accuracy: {oob_accuracy(forest, corpus):.3f}")

ranking = feature_importance(forest)
names = catalog.dim_names()
print("\ntop 10 attributes by mean decrease in impurity:")
for i in ranking.order[:10]:
    print(f"  {ranking.importance[i]:.4f}  {names[i]}")

top20 = select_attributes(ranking, catalog, SelectionConfig("topk", k=20))
manual = select_attributes(ranking, catalog, SelectionConfig("manual17"))
grouped = select_attributes(ranking, catalog,
                            SelectionConfig("random_grouped", k=20, seed=2))
print(f"\nselection sizes: top-k {len(top20)}, manual {len(manual)}, "
      f"group-balanced random {len(grouped)}")
