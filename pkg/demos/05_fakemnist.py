"""Paint class labels into the first image row.

A classifier trained on FakeMNIST can reach perfect accuracy by reading the
painted pixels alone, so an explainer that only edits that row flips the
prediction without changing anything a human would notice.

Run: python3 demos/05_fakemnist.py
"""

import numpy as np

from cfeval import synth

images = np.random.default_rng(0).random((8, 12, 12))
painted, labels = synth.make_fakemnist(images, num_classes=10, seed=4)
print("labels:", labels.tolist())
print("first row of sample 0:", np.round(painted.values[0, 0], 2).tolist())
print("decoded from pixels:", np.argmax(painted.values[:, 0, :10], axis=1).tolist())
