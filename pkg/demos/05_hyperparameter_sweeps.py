"""Sweeping the penalty weight and the acceleration memory depth.

Reproduces the shape of the accuracy-vs-hyperparameter tables: rows are grid
values, columns are test accuracy at five evenly spaced epoch checkpoints.
The penalty weight rho sets how hard the linear constraints z = W a + b are
enforced; the memory depth m bounds how many secant pairs the accelerated
outer loop keeps.
"""

from aadladmm import AAConfig, ProblemSpec, TrainConfig, split, synth_blobs, train

blobs = synth_blobs(n_per_class=100, d=10, classes=2, spread=0.6, seed=11)
train_ds, test_ds = split(blobs, 0.8, seed=11)
epochs = 100
checkpoints = [20, 40, 60, 80, 100]


def run(rho, m):
    spec = ProblemSpec(layer_dims=(10, 16, 16, 2), rho=rho)
    res = train(train_ds, spec, TrainConfig(epochs=epochs, seed=11, aa=AAConfig(m=m)),
                test_data=test_ds)
    accs = {mm.epoch + 1: mm.test_acc for mm in res.metrics}
    return [accs[c] for c in checkpoints]


print("test accuracy vs rho (m = 8)")
print(f"{'rho':>8} " + " ".join(f"ep{c:>4}" for c in checkpoints))
for rho in (1e-5, 1e-4, 1e-3, 1e-2):
    print(f"{rho:8.0e} " + " ".join(f"{a:6.3f}" for a in run(rho, 8)))

print("\ntest accuracy vs memory depth m (rho = 1e-3)")
print(f"{'m':>8} " + " ".join(f"ep{c:>4}" for c in checkpoints))
for m in (6, 8, 10, 12):
    print(f"{m:8d} " + " ".join(f"{a:6.3f}" for a in run(1e-3, m)))
