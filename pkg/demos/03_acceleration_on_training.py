"""What acceleration buys during training.

Runs the same training problem twice from the same seed: once plain, once
with the accelerated outer loop (each full alternating-minimization epoch is
one application of the fixed-point map).  Prints the epoch at which each run
first reaches the plain run's final objective, and how many accelerated
proposals the safeguard accepted.
"""

from aadladmm import AAConfig, ProblemSpec, TrainConfig, synth_blobs, train

ds = synth_blobs(n_per_class=100, d=10, classes=2, spread=0.5, seed=3)
spec = ProblemSpec(layer_dims=(10, 16, 16, 2), rho=1e-3)

plain = train(ds, spec, TrainConfig(epochs=200, seed=3))
accel = train(ds, spec, TrainConfig(epochs=200, seed=3, aa=AAConfig(m=8)))

threshold = plain.metrics[-1].objective + 0.01


def first_epoch_below(metrics):
    return next((m.epoch for m in metrics if m.objective <= threshold), None)


print(f"target objective (plain final + 0.01): {threshold:.5f}")
print(f"plain run reaches it at epoch      : {first_epoch_below(plain.metrics)}")
print(f"accelerated run reaches it at epoch: {first_epoch_below(accel.metrics)}")
print(f"accepted accelerated proposals     : "
      f"{sum(m.aa_accepted for m in accel.metrics)} / {len(accel.metrics)}")

print(f"\n{'epoch':>5} {'plain obj':>12} {'accel obj':>12}")
for k in range(0, 200, 20):
    print(f"{k:5d} {plain.metrics[k].objective:12.6f} {accel.metrics[k].objective:12.6f}")
