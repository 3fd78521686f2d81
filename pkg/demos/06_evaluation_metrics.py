"""The evaluation toolbox: sentence mapping, overlap labeling, boundary
snapping, F1@K, agreement and regression metrics, and the energy estimator."""

from spandet.data import split_sentences
from spandet.geometry import CharSpan
from spandet.metrics import (boundary_suite, classification_suite, co2_estimate,
                             f1_at_k, interval_to_sentence, kappa,
                             overlap_labels, snap_boundaries)

text = ("Humans started this paragraph with style. Then a model perhaps "
        "took over midway through. Nobody admitted anything afterwards. "
        "The reviewer had to find out alone.")
sentences = split_sentences(text)
print(f"{len(sentences)} sentences:")
for i, sp in enumerate(sentences):
    print(f"  {i}: [{sp.x1:3d},{sp.x2:3d}) {text[sp.x1:sp.x2]!r}")

# Rule 1: map a character position to a sentence index, bumping past the
# midpoint to the next sentence.
for t in (0, 60, 100):
    print(f"char {t:3d} -> sentence index {interval_to_sentence(t, sentences)}")

# Rule 2: label each sentence from the covered fraction (threshold 0.94).
pred = [CharSpan(43, 135)]
labels = overlap_labels(sentences, pred)
print(f"\npredicted interval {pred[0]} -> sentence labels {labels} "
      "(0 human, 1 machine, 2 mixed)")

# Rule 3: snap interval endpoints to sentence starts, dropping text edges.
bounds = snap_boundaries(pred, sentences, len(text))
print(f"snapped boundaries: {bounds}")

# F1@K compares the top-K scored boundary candidates against the truth.
candidates = [(bounds[0], 0.95), (sentences[3].x1, 0.3), (sentences[1].x1, 0.2)]
print(f"F1@3 with one true boundary hit out of three candidates: "
      f"{f1_at_k(candidates, [bounds[0]], 3):.2f}")

# Regression-style boundary metrics and inter-rater agreement.
print(f"\nboundary suite: {boundary_suite([2, 5, 7], [2, 4, 9])}")
print(f"kappa on a 3-class labeling: "
      f"{kappa([0, 1, 2, 1, 0, 2], [0, 1, 2, 2, 0, 2]):.3f}")

# Classification metrics over machine-probability scores.
suite = classification_suite([0.9, 0.7, 0.3, 0.1], [1, 1, 0, 0])
print(f"classification: {suite}")

# Energy bookkeeping for a training run: PUE * kWh * intensity / 1000.
kg = co2_estimate(pue=1.3, kwh=0.7 * 5, intensity_g_per_kwh=400)
print(f"\n5h at 700W, PUE 1.3, 400 g/kWh -> {kg:.2f} kg CO2")
