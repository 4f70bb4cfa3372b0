"""Train a small mixture density network on synthetic walkers, then forecast EC visits."""
import numpy as np

from vnfmig import mdn, trajdata
from vnfmig.mobility import EcGeometry, UserContext, predict_visit_probabilities

rng = np.random.default_rng(0)
kernels = trajdata.kernel_bank(20, seed=0)
segments = [trajdata.synthesize_trajectory(k, 300, rng=rng) for k in kernels]
split = trajdata.split_segments(segments, 0.9, seed=0)
train = trajdata.windows_from_segments(split.train)
val = trajdata.windows_from_segments(split.validation)
print("windows:", len(train[1]), "train /", len(val[1]), "validation")

model = mdn.init_model(hidden=(64, 32), components=2, seed=0)
model, hist = mdn.train(model, train, val, epochs=10, batch_size=256,
                        optimizer=mdn.OptimizerState(learning_rate=1e-3))
for epoch, tr, va in hist.rows()[::3]:
    print(f"epoch {epoch:2d}: train {tr:.3f}  val {va:.3f}")

ec = EcGeometry((0.0, 0.0), 500.0)
walker = trajdata.synthesize_trajectory(kernels[0], 40, rng=rng).positions
walker += np.array([650.0, 0.0]) - walker[-1]     # history ends just outside the disc
ctx = UserContext("walker", walker)
p_v = predict_visit_probabilities(model, ctx, ec, horizon_T=30, n_rollouts=200,
                                  rng_stream=np.random.default_rng(1))
print("visit probability, every 5th step:", np.round(p_v[::5], 3))
