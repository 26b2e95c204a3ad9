"""Train CLDG on a two-community dynamic SBM and probe the frozen embeddings.

Takes about ten seconds single-threaded.
"""

import numpy as np

from cldg.evaluation import SplitSpec, final_embeddings, linear_probe
from cldg.synthetic import dynamic_sbm
from cldg.trainer import TrainConfig, train

g = dynamic_sbm(num_nodes=500, num_edges=5000, ratio=4.0, feature_signal=1.5, seed=0)

params, history = train(g, TrainConfig(epochs=200, seed=0))
for row in history[::40]:
    print(f"epoch {row['epoch']:3d}  loss {row['loss']:.4f}")
print(f"{params.num_parameters()} parameters")

emb, flagged = final_embeddings(g, params, g.features, s=4)
acc, wf1 = linear_probe(emb, g.labels, SplitSpec(seed=0))
print(f"linear probe on embeddings: accuracy {acc:.3f}, weighted F1 {wf1:.3f}")

# the raw features alone are much weaker
raw_acc, _ = linear_probe(g.features, g.labels, SplitSpec(seed=0))
print(f"linear probe on raw features: accuracy {raw_acc:.3f}")

# and with labels scrambled there is nothing to learn
shuffled = np.random.default_rng(0).permutation(g.labels)
print(f"shuffled labels: accuracy {linear_probe(emb, shuffled)[0]:.3f}")
