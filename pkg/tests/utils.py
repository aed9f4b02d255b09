import numpy as np

from catharm.dataio import Dataset, write_idx
from catharm.dataio.mnist import IMAGES_MAGIC, LABELS_MAGIC
from catharm.functors import LatentSpec, build_bundle

MINIMAL_SPEC = """
dataset { kind = synth; m = 60; p = 4; }
latent { dim = 3; }
train { epochs = 2; }
"""

SYNTH_SPEC = """
# tiny synthetic run
dataset {
    kind = synth;
    m = 90;
    p = 4;
    effect = 2.0;
}

latent {
    dim = 3;
    encoder = mlp(auto, 6, 3);
    classifier = mlp(3, auto);
}

covariate {
    name = "g";
    kind = ordinal;
    constraint = equivariance;
    morphism = orthogonal(3);
    lambda = 0.5;
}

train {
    epochs = 2;
    batch_size = 16;
    learning_rate = 0.01;
    folds = 2;
    seed = 3;
}

metrics {
    select = set(acc, d);
}
"""


def toy_dataset(m=24, p=4, seed=0):
    """Two classes, a two-site categorical column and an integer age column."""
    rng = np.random.default_rng(seed)
    return Dataset(
        features=rng.standard_normal((m, p)),
        labels=np.arange(m) % 2,
        columns={
            "site": np.array(["a", "b", "b"] * (m // 3) + ["a"] * (m % 3)),
            "age": (np.arange(m) * 7) % 30 + 20,
        },
    )


def tiny_bundle(p=4, n=3, classes=2, morphisms=None, decoder=True, seed=0):
    latent = LatentSpec(n, hidden=(5,), decoder=(5,) if decoder else None)
    return build_bundle(latent, p, classes, morphisms, seed=seed)


def rotation(n, angle, plane=(0, 1)):
    """Orthogonal matrix rotating `plane` by `angle` radians."""
    matrix = np.eye(n)
    i, j = plane
    matrix[i, i] = matrix[j, j] = np.cos(angle)
    matrix[i, j], matrix[j, i] = -np.sin(angle), np.sin(angle)
    return matrix


def write_mnist(directory, count=20, seed=0, prefix="train"):
    """Write random 28x28 IDX images and cycling digit labels, return their paths."""
    rng = np.random.default_rng(seed)
    images = directory / f"{prefix}-images-idx3-ubyte"
    labels = directory / f"{prefix}-labels-idx1-ubyte"
    write_idx(images, rng.integers(0, 256, size=(count, 28, 28)), IMAGES_MAGIC)
    write_idx(labels, np.arange(count) % 10, LABELS_MAGIC)
    return images, labels
