import logging

import numpy as np

from catharm._internal import utils
from catharm.exceptions import DimensionMismatch, GraphStateError, PowerLimitExceeded
from catharm.functors.mlp import MLP
from catharm.functors.morphism import MAX_POWER, Morphism, init_matrix, retract
from catharm.numcore import Graph, Tensor

logger = logging.getLogger(__name__)

MORPHISM_PREFIX = "morphism."


class ModelBundle:
    """Encoder, decoder, classifier and latent morphisms of one model.

    Parameters live in a single flat mapping of :class:`Tensor` named after
    their owner (``encoder.W0``, ``classifier.b1``, ``morphism.age``...). The
    decoder is optional.
    """

    def __init__(self, encoder, classifier, decoder=None, morphisms=None, parameters=None):
        """Assemble a bundle.

        :param encoder: Network from the feature space to the latent space.
        :type encoder: :class:`MLP`
        :param classifier: Network from the latent space to the class logits.
        :type classifier: :class:`MLP`
        :param decoder: Network back to the feature space, if any.
        :type decoder: :class:`MLP` or `None`
        :param morphisms: Orthogonal flag per covariate owning a morphism.
        :type morphisms: :class:`dict` of :class:`str` to :class:`bool`
        :param parameters: Every parameter value by name.
        :type parameters: :class:`dict` of :class:`str` to :class:`Tensor`
        :raises DimensionMismatch: If the parts do not agree on dimensions.
        """
        self.encoder = encoder
        self.decoder = decoder
        self.classifier = classifier
        self.morphism_flags = dict(morphisms or {})
        self.max_power = MAX_POWER
        self.parameters = {name: Tensor.of(value) for name, value in (parameters or {}).items()}
        self._check()

    def _check(self):
        n = self.n
        if self.classifier.in_dim != n:
            raise DimensionMismatch(
                f"Classifier expects {self.classifier.in_dim}, latent is {n}."
            )
        if self.decoder is not None and (
            self.decoder.in_dim != n or self.decoder.out_dim != self.encoder.in_dim
        ):
            raise DimensionMismatch(
                f"Decoder maps {self.decoder.in_dim} -> {self.decoder.out_dim}, "
                f"expected {n} -> {self.encoder.in_dim}."
            )
        expected = dict(self.parameter_shapes())
        if set(expected) != set(self.parameters):
            missing = sorted(set(expected) - set(self.parameters))
            extra = sorted(set(self.parameters) - set(expected))
            raise DimensionMismatch(f"Parameters missing {missing}, unexpected {extra}.")
        for name, shape in expected.items():
            if self.parameters[name].shape != shape:
                raise DimensionMismatch(
                    f"Parameter {name} has shape {self.parameters[name].shape}, expected {shape}."
                )

    @property
    def n(self):
        return self.encoder.out_dim

    @property
    def p(self):
        return self.encoder.in_dim

    @property
    def classes(self):
        return self.classifier.out_dim

    @property
    def networks(self):
        return [net for net in (self.encoder, self.decoder, self.classifier) if net is not None]

    def parameter_shapes(self):
        shapes = {}
        for net in self.networks:
            shapes.update(net.parameter_shapes())
        for covariate in self.morphism_flags:
            shapes[MORPHISM_PREFIX + covariate] = (self.n, self.n)
        return shapes

    @classmethod
    def initialize(cls, encoder, classifier, decoder=None, morphisms=None, seed=0):
        """Seeded fresh bundle: Kaiming-uniform networks, near-identity morphisms."""
        rng = np.random.default_rng(seed)
        morphisms = dict(morphisms or {})
        parameters = {}
        for net in (encoder, decoder, classifier):
            if net is not None:
                parameters.update(net.init(rng))
        for covariate in morphisms:
            parameters[MORPHISM_PREFIX + covariate] = Tensor(init_matrix(encoder.out_dim, rng))
        return cls(encoder, classifier, decoder, morphisms, parameters)

    def morphism(self, covariate):
        """The :class:`Morphism` of `covariate`."""
        if covariate not in self.morphism_flags:
            raise KeyError(f"No morphism for covariate {covariate!r}.")
        return Morphism(
            covariate,
            self.parameters[MORPHISM_PREFIX + covariate],
            orthogonal=self.morphism_flags[covariate],
            max_power=self.max_power,
        )

    @property
    def morphisms(self):
        return {covariate: self.morphism(covariate) for covariate in self.morphism_flags}

    def with_parameters(self, parameters):
        """Copy of the bundle with some parameters replaced."""
        merged = dict(self.parameters)
        merged.update(parameters)
        bundle = type(self)(
            self.encoder, self.classifier, self.decoder, self.morphism_flags, merged
        )
        bundle.max_power = self.max_power
        return bundle

    def retract_morphisms(self):
        """Copy with every orthogonal morphism replaced by its QR orthogonal factor."""
        names = [
            MORPHISM_PREFIX + covariate
            for covariate, orthogonal in self.morphism_flags.items()
            if orthogonal
        ]
        return self.with_parameters(
            {name: Tensor(retract(self.parameters[name].data)) for name in names}
        )

    def architecture(self):
        return {
            "encoder": self.encoder.to_dict(),
            "decoder": None if self.decoder is None else self.decoder.to_dict(),
            "classifier": self.classifier.to_dict(),
            "morphisms": dict(self.morphism_flags),
            "max_power": self.max_power,
        }

    @classmethod
    def from_architecture(cls, architecture, parameters):
        decoder = architecture.get("decoder")
        bundle = cls(
            MLP.from_dict(architecture["encoder"]),
            MLP.from_dict(architecture["classifier"]),
            None if decoder is None else MLP.from_dict(decoder),
            architecture.get("morphisms", {}),
            parameters,
        )
        bundle.max_power = architecture.get("max_power", MAX_POWER)
        return bundle

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return self.architecture() == other.architecture() and self.parameters == other.parameters

    __hash__ = None

    def __repr__(self):
        return utils.make_repr(
            self, p=self.p, n=self.n, classes=self.classes, morphisms=sorted(self.morphism_flags)
        )


def build_bundle(latent, p, classes, morphisms=None, seed=0):
    """Fresh seeded bundle laid out by `latent`.

    :param latent: Latent dimension and hidden widths.
    :type latent: :class:`LatentSpec`
    :param p: Number of features.
    :param classes: Number of label classes.
    :param morphisms: Orthogonal flag per covariate owning a morphism.
    :type morphisms: :class:`dict` of :class:`str` to :class:`bool`
    :rtype: :class:`ModelBundle`
    """
    encoder = MLP("encoder", (p, *latent.hidden, latent.n), latent.activation)
    classifier = MLP("classifier", (latent.n, *latent.classifier, classes), latent.activation)
    decoder = None
    if latent.decoder is not None:
        decoder = MLP("decoder", (latent.n, *latent.decoder, p), latent.activation, latent.output)
    return ModelBundle.initialize(encoder, classifier, decoder, morphisms, seed)


class BatchGraph:
    """A :class:`ModelBundle` bound to a fresh :class:`Graph` for one batch.

    The encoder runs once per batch; every loss term reuses its latent node.
    Dataset indices of the batch rows map pair entries to rows.
    """

    def __init__(self, bundle, features, indices=None, labels=None, codes=None):
        features = Tensor.of(features)
        if features.ndim != 2 or features.shape[1] != bundle.p:
            raise DimensionMismatch(
                f"Encoder expects rows of {bundle.p} features, got {features.shape}."
            )
        self.bundle = bundle
        self.graph = Graph()
        self.features = features
        self.indices = np.arange(features.shape[0]) if indices is None else np.asarray(indices)
        self.labels = None if labels is None else np.asarray(labels, dtype=np.intp)
        self.codes = dict(codes or {})
        self._rows = {int(index): row for row, index in enumerate(self.indices)}
        self._input = self.graph.input("s", (None, bundle.p))
        self._latents = None
        self._powers = {}

    def __len__(self):
        return self.features.shape[0]

    def rows(self, indices):
        """Batch rows of the dataset `indices`."""
        try:
            return np.array([self._rows[int(index)] for index in indices], dtype=np.intp)
        except KeyError as exc:
            raise GraphStateError(f"Sample {exc.args[0]} is not part of the batch.") from None

    def parameter(self, name):
        return self.graph.parameter(name, self.bundle.parameters[name])

    @property
    def input(self):  # noqa: A003
        return self._input

    @property
    def latents(self):
        if self._latents is None:
            encoder = self.bundle.encoder
            self._latents = encoder.build(self.graph, self._input, self.bundle.parameters)
        return self._latents

    def decoded(self):
        if self.bundle.decoder is None:
            raise DimensionMismatch("This bundle has no decoder.")
        return self.bundle.decoder.build(self.graph, self.latents, self.bundle.parameters)

    def logits(self):
        return self.bundle.classifier.build(self.graph, self.latents, self.bundle.parameters)

    def power(self, covariate, k):
        """Node of ``W^k`` for the morphism of `covariate`, `k` a nonzero integer."""
        m = self.bundle.morphism(covariate)
        if k == 0:
            raise GraphStateError("The zeroth power has no node, use the latents directly.")
        if abs(k) > m.max_power:
            raise PowerLimitExceeded(
                f"Power {k} of morphism {covariate!r} exceeds {m.max_power}."
            )
        key = (covariate, k)
        if key not in self._powers:
            if k < 0:
                base = self.power(covariate, -k)
                node = self.graph.transpose(base) if m.orthogonal else self.graph.inverse(base)
            elif k == 1:
                node = self.parameter(MORPHISM_PREFIX + covariate)
            else:
                node = self.graph.matmul(self.power(covariate, k - 1), self.power(covariate, 1))
            self._powers[key] = node
        return self._powers[key]

    def forward(self):
        return self.graph.forward({"s": self.features})

    def backward(self):
        return self.graph.backward()


def _as_rows(x, dim, what):
    x = Tensor.of(x)
    if x.ndim not in (1, 2) or x.shape[-1] != dim:
        raise DimensionMismatch(f"{what} expects dimension {dim}, got shape {x.shape}.")
    return Tensor(x.data.reshape(-1, dim)), x.ndim == 1


def _run(bundle, features, build):
    batch = BatchGraph(bundle, features)
    node = build(batch)
    batch.graph.output(node)
    return batch.forward()


def _run_latent(net, z, bundle):
    graph = Graph()
    x = graph.input("z", (None, bundle.n))
    graph.output(net.build(graph, x, bundle.parameters))
    return graph.forward({"z": z})


def encode(bundle, s):
    """Latent vector(s) ``F(s)`` of one sample or one sample per row."""
    rows, single = _as_rows(s, bundle.p, "Encoder")
    z = _run(bundle, rows, lambda batch: batch.latents)
    return Tensor(z.data[0]) if single else z


def decode(bundle, z):
    """Feature vector(s) ``F^-1(z)``."""
    if bundle.decoder is None:
        raise DimensionMismatch("This bundle has no decoder.")
    rows, single = _as_rows(z, bundle.n, "Decoder")
    s = _run_latent(bundle.decoder, rows, bundle)
    return Tensor(s.data[0]) if single else s


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def classify(bundle, z):
    """Class probabilities ``softmax(C(z))``."""
    rows, single = _as_rows(z, bundle.n, "Classifier")
    probabilities = softmax(_run_latent(bundle.classifier, rows, bundle).data)
    return Tensor(probabilities[0]) if single else Tensor(probabilities)


def predict(bundle, s):
    """Predicted label of every row of `s`, ``argmax C(F(s))``."""
    return np.argmax(classify(bundle, encode(bundle, s)).data, axis=-1)
