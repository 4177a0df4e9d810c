"""Head-to-head optimizer comparison on one dataset and seed.

All four optimizers start from the same initial weights (same seed, same
initialization scheme): the accelerated alternating minimizer, its plain
ablation, full-batch gradient descent, and Adam.  Prints a joined test
accuracy table, the same information the CLI's compare command writes as CSV.
"""

from aadladmm import (
    AAConfig,
    BaselineConfig,
    ProblemSpec,
    TrainConfig,
    adam_train,
    gd_train,
    split,
    synth_blobs,
    train,
)

blobs = synth_blobs(n_per_class=150, d=10, classes=3, spread=0.8, seed=7)
train_ds, test_ds = split(blobs, 0.8, seed=7)
spec = ProblemSpec(layer_dims=(10, 16, 16, 3), rho=1e-3)
epochs = 100

runs = {
    "accelerated": train(train_ds, spec, TrainConfig(epochs=epochs, seed=7, aa=AAConfig(m=8)),
                         test_data=test_ds).metrics,
    "plain": train(train_ds, spec, TrainConfig(epochs=epochs, seed=7),
                   test_data=test_ds).metrics,
    "gd": gd_train(train_ds, spec, BaselineConfig(kind="gd", lr=0.01, epochs=epochs, seed=7),
                   test_data=test_ds)[2],
    "adam": adam_train(train_ds, spec, BaselineConfig(kind="adam", lr=1e-3, epochs=epochs, seed=7),
                       test_data=test_ds)[2],
}

names = list(runs)
print(f"{'epoch':>5} " + " ".join(f"{n:>12}" for n in names))
for k in range(0, epochs, 10):
    row = " ".join(f"{runs[n][k].test_acc:12.3f}" for n in names)
    print(f"{k:5d} {row}")
print(f"{epochs - 1:5d} " + " ".join(f"{runs[n][-1].test_acc:12.3f}" for n in names))
