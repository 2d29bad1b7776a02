"""Darkening a counterfactual lowers IM2.

The autoencoders in the synthetic world are linear, so scaling a
counterfactual by a factor a scales both reconstructions by a. The IM2
numerator is a squared difference and shrinks like a squared, while the L1
denominator shrinks only like a. IM2 therefore falls in proportion to a, and
a method can improve its score just by dimming its outputs.

Run: python3 demos/04_im2_darkening.py
"""

from cfeval import metrics as M
from cfeval import synth

world = synth.gen_world(synth.SyntheticSpec(seed=1))
bundle = synth.build_bundle(world, "prototype", n_eval=5, seed=1)

for c, target in zip(bundle.counterfactuals, bundle.targets):
    row = []
    for a in (1.0, 0.8, 0.6, 0.4, 0.2):
        d = a * c
        row.append(M.im2(d, synth.reconstruct(world.autoencoders[target], d),
                         synth.reconstruct(world.global_autoencoder, d)))
    print("  ".join(f"{100 * v:7.3f}" for v in row))
