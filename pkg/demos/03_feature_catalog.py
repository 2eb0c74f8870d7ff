"""
Attribute extraction
====================

The 535-dimension symbolic feature catalog: extract a vector from one
score and inspect a few interpretable entries.
"""

import numpy as np

from emomusic.features import default_catalog, extract_features
from emomusic.mapping import EmotionQuadrant
from emomusic.synth import SynthSpec, synth_score

catalog = default_catalog()
print(f"catalog {catalog.version}: {len(catalog.entries)} features, "
      f"{catalog.total_dim} dimensions")

rng = np.random.default_rng(0)
spec = SynthSpec(noise=0.0)

for quadrant in EmotionQuadrant:
    score = synth_score(spec, quadrant, rng)
    vec = extract_features(score, catalog).values
    row = {}
    for fid in ("note_density_per_quarter_note", "initial_tempo_bpm",
                "mean_velocity", "mean_pitch"):
        start, _ = catalog.span(fid)
        row[fid] = vec[start]
    print(f"{quadrant.name}: density={row['note_density_per_quarter_note']:.2f}  "
          f"tempo={row['initial_tempo_bpm']:5.1f}  "
          f"velocity={row['mean_velocity']:5.1f}  "
          f"pitch={row['mean_pitch']:5.1f}")

# histogram blocks are probability vectors
score = synth_score(spec, EmotionQuadrant.Q1, rng)
vec = extract_features(score, catalog).values
start, dim = catalog.span("pitch_class_histogram")
pch = vec[start:start + dim]
print("\nQ1 pitch-class histogram (C major tones dominate):")
for pc, name in enumerate("C C# D D# E F F# G G# A A# B".split()):
    print(f"  {name:2s} {'#' * int(40 * pch[pc])}")
