#!/usr/bin/env python3
"""Agreement metrics between label sets from three raters.

Builds a synthetic three-rater scenario (an automated classifier, a baseline
classifier, and a human reviewer), then reports chance-corrected agreement,
exact agreement, three-way agreement strata, a confusion matrix and label
distributions.
"""

import numpy as np

from ictriage.metrics import (
    LabelSet,
    cohens_kappa,
    evaluate,
    exact_agreement,
    render_report,
    stratify_three_way,
)

rng = np.random.default_rng(5)
labels = ["brain", "eye", "muscle", "heart", "channel_noise", "other_artifact"]

# A human reviewer labels 200 components...
human = {f"c{i:03d}": rng.choice(labels, p=[0.31, 0.17, 0.35, 0.01, 0.16, 0.0])
         for i in range(200)}
# ...the vision classifier agrees most of the time...
vision = {k: (v if rng.uniform() < 0.85 else rng.choice(labels)) for k, v in human.items()}
# ...the baseline a bit less often, and it never says heart.
baseline = {k: (v if rng.uniform() < 0.75 and v != "heart" else rng.choice(labels[:3]))
            for k, v in human.items()}

h = LabelSet("human", human)
v = LabelSet("vision", vision)
b = LabelSet("baseline", baseline)

print(f"kappa(vision, human)   = {cohens_kappa(v, h):.3f}")
print(f"kappa(baseline, human) = {cohens_kappa(b, h):.3f}")
print(f"exact(vision, human)   = {exact_agreement(v, h) * 100:.1f}%\n")

strata = stratify_three_way(v, b, h)
for name, frac in strata.items():
    print(f"{name:>20s}: {frac * 100:5.1f}%")

print("\nfull report (vision and baseline scored against the human):\n")
report = evaluate({"vision": v, "baseline": b, "human": h}, truth_key="human")
print(render_report(report))
