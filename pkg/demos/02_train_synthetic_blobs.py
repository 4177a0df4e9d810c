"""Training a small network without gradients.

Trains a [10, 16, 16, 2] ReLU network on two Gaussian blobs by alternating
minimization alone (no backpropagation, no acceleration) and prints the epoch
trace: the penalized objective only ever moves down, the constraint residual
||z - W a - b|| shrinks, and the feasibility band width eps halves per epoch
until it reaches its floor.
"""

from aadladmm import ProblemSpec, TrainConfig, evaluate, split, synth_blobs, train

blobs = synth_blobs(n_per_class=100, d=10, classes=2, spread=0.5, seed=0)
train_ds, test_ds = split(blobs, 0.8, seed=0)

spec = ProblemSpec(layer_dims=(10, 16, 16, 2), rho=1e-3)
result = train(train_ds, spec, TrainConfig(epochs=60, seed=0), test_data=test_ds)

print(f"{'epoch':>5} {'objective':>12} {'residual':>10} {'train':>6} {'test':>6} {'eps':>8}")
for m in result.metrics:
    if m.epoch % 5 == 0 or m.epoch == len(result.metrics) - 1:
        print(f"{m.epoch:5d} {m.objective:12.6f} {m.residual_norm:10.4f} "
              f"{m.train_acc:6.3f} {m.test_acc:6.3f} {m.eps:8.3f}")

objs = [m.objective for m in result.metrics]
print(f"\nobjective monotone: {all(b <= a + 1e-9 for a, b in zip(objs, objs[1:]))}")
print(f"final test accuracy: {evaluate(result.state, spec, test_ds.features, test_ds.labels):.3f}")
