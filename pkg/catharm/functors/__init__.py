from .bundle import (
    BatchGraph,
    ModelBundle,
    build_bundle,
    classify,
    decode,
    encode,
    predict,
    softmax,
)
from .mlp import ACTIVATIONS, MLP, LatentSpec
from .morphism import (
    Morphism,
    apply_morphism,
    morphism_power,
    orthogonality_residual,
    retract,
)
