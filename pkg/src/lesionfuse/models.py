"""The two toy CNN backbones and their declarative architecture specs.

``mini-inception`` runs a stack of multi-branch modules (parallel
convolutions of several kernel sizes concatenated channel-wise, optionally
with k x k kernels factorized into 1 x k followed by k x 1) and a
two-layer fully-connected head.  ``mini-densenet`` runs one dense block
(each layer consumes the concatenation of everything before it and
contributes ``growth`` channels), a 1 x 1 transition convolution, global
max-pooling, and a three-layer fully-connected head.

Both end in a single sigmoid unit scoring the probability of class 1
(malignant); a two-unit softmax output is available via ``output_units=2``.

A :class:`ModelSpec` round-trips through a canonical line-based text form
(see :meth:`ModelSpec.to_text`) which is what checkpoints embed, so a
checkpoint is self-describing.  Parameters are initialized Kaiming-uniform
(fan-in scaling) from a seeded generator in a fixed construction order:
the same (spec, seed) pair always yields bit-identical parameters.
"""

from dataclasses import dataclass

import numpy as np

from .autograd import (
    Tensor,
    activate,
    concat_channels,
    conv2d,
    dense,
    flatten,
    maxpool2d,
    global_maxpool,
    relu,
    reshape,
    zero_pad2d,
)

__all__ = [
    "ConvSpec",
    "BranchSpec",
    "InceptionModuleSpec",
    "DenseBlockSpec",
    "ModelSpec",
    "ModelConfigError",
    "InceptionModule",
    "DenseBlock",
    "Model",
    "build_inception_module",
    "build_dense_block",
    "build_model",
    "default_inception_spec",
    "default_densenet_spec",
]

KIND_INCEPTION = "mini-inception"
KIND_DENSENET = "mini-densenet"

INCEPTION_HEAD_LAYERS = 2
DENSENET_HEAD_LAYERS = 3

# 3x3 max-pool, stride 1, zero same-padding: the parameter-free branch.
_BRANCH_POOL_WINDOW = 3


class ModelConfigError(ValueError):
    """An architecture spec violates its structural invariants."""


@dataclass(frozen=True)
class ConvSpec:
    """One convolution: ``out_channels`` filters of ``kh`` x ``kw``."""

    out_channels: int
    kh: int
    kw: int

    def validate(self, where, same_padding=True):
        if self.out_channels < 1:
            raise ModelConfigError(f"{where}: out_channels must be >= 1, got {self.out_channels}")
        if self.kh < 1 or self.kw < 1:
            raise ModelConfigError(f"{where}: kernel sides must be >= 1, got {self.kh}x{self.kw}")
        if same_padding and (self.kh % 2 == 0 or self.kw % 2 == 0):
            raise ModelConfigError(
                f"{where}: same-padding convs need odd kernels, got {self.kh}x{self.kw}"
            )

    def to_text(self):
        return f"{self.out_channels}c{self.kh}x{self.kw}"

    @staticmethod
    def from_text(text, where):
        try:
            channels, kern = text.split("c", 1)
            kh, kw = kern.split("x", 1)
            return ConvSpec(int(channels), int(kh), int(kw))
        except ValueError:
            raise ModelConfigError(
                f"{where}: conv descriptor must look like '8c3x3', got {text!r}"
            ) from None


@dataclass(frozen=True)
class BranchSpec:
    """One inception branch: optional leading 3x3 pool, then convs in order."""

    convs: tuple
    pool: bool = False

    def validate(self, where):
        if not self.convs:
            raise ModelConfigError(f"{where}: branch needs at least one conv")
        for i, conv in enumerate(self.convs, start=1):
            conv.validate(f"{where}.conv{i}")

    @property
    def out_channels(self):
        return self.convs[-1].out_channels

    def to_text(self):
        parts = (["pool"] if self.pool else []) + [c.to_text() for c in self.convs]
        return "+".join(parts)

    @staticmethod
    def from_text(text, where):
        parts = text.split("+")
        pool = parts and parts[0] == "pool"
        if pool:
            parts = parts[1:]
        convs = tuple(ConvSpec.from_text(p, where) for p in parts)
        return BranchSpec(convs=convs, pool=pool)


@dataclass(frozen=True)
class InceptionModuleSpec:
    """Parallel branches over one input, outputs concatenated channel-wise."""

    branches: tuple
    factorized: bool = False

    def validate(self, where):
        if len(self.branches) < 2:
            raise ModelConfigError(
                f"{where}: an inception module needs >= 2 branches, got {len(self.branches)}"
            )
        for i, branch in enumerate(self.branches, start=1):
            branch.validate(f"{where}.branch{i}")

    @property
    def out_channels(self):
        return sum(b.out_channels for b in self.branches)

    def to_text(self):
        return "|".join(b.to_text() for b in self.branches)

    @staticmethod
    def from_text(text, where, factorized=False):
        branches = tuple(BranchSpec.from_text(p, where) for p in text.split("|"))
        return InceptionModuleSpec(branches=branches, factorized=factorized)


@dataclass(frozen=True)
class DenseBlockSpec:
    """``layers`` convolutions, each contributing ``growth`` channels."""

    layers: int
    growth: int
    kernel: int = 3

    def validate(self, where):
        if self.layers < 0:
            raise ModelConfigError(f"{where}: layer count must be >= 0, got {self.layers}")
        if self.growth < 1:
            raise ModelConfigError(f"{where}: growth rate must be >= 1, got {self.growth}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ModelConfigError(f"{where}: kernel must be odd and >= 1, got {self.kernel}")

    def out_channels(self, in_channels):
        return in_channels + self.layers * self.growth

    def to_text(self):
        return f"{self.layers},{self.growth},{self.kernel}"

    @staticmethod
    def from_text(text, where):
        try:
            layers, growth, kernel = (int(p) for p in text.split(","))
        except ValueError:
            raise ModelConfigError(
                f"{where}: dense block must be 'layers,growth,kernel', got {text!r}"
            ) from None
        return DenseBlockSpec(layers=layers, growth=growth, kernel=kernel)


@dataclass(frozen=True)
class ModelSpec:
    """Complete architecture description; canonical text round trip."""

    kind: str
    input_shape: tuple  # (C, H, W)
    stem: ConvSpec
    modules: tuple = ()  # mini-inception only
    pool: tuple = (2, 2)  # (window, stride) after the modules
    block: DenseBlockSpec = None  # mini-densenet only
    transition: int = 0  # mini-densenet 1x1 conv channels
    head: tuple = ()
    output_units: int = 1

    def validate(self):
        if self.kind not in (KIND_INCEPTION, KIND_DENSENET):
            raise ModelConfigError(f"unknown model kind {self.kind!r}")
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ModelConfigError(f"input shape must be (C,H,W) >= 1, got {self.input_shape}")
        self.stem.validate("stem")
        if self.output_units not in (1, 2):
            raise ModelConfigError(f"output_units must be 1 or 2, got {self.output_units}")
        if any(h < 1 for h in self.head):
            raise ModelConfigError(f"head widths must be >= 1, got {self.head}")
        if self.kind == KIND_INCEPTION:
            if not self.modules:
                raise ModelConfigError("mini-inception needs at least one module")
            for i, mod in enumerate(self.modules, start=1):
                mod.validate(f"module{i}")
            if len(self.pool) != 2 or self.pool[0] < 1 or self.pool[1] < 1:
                raise ModelConfigError(f"pool must be (window,stride) >= 1, got {self.pool}")
            if len(self.head) != INCEPTION_HEAD_LAYERS:
                raise ModelConfigError(
                    f"mini-inception head must have exactly {INCEPTION_HEAD_LAYERS} "
                    f"FC layers, got {len(self.head)}"
                )
        else:
            if self.block is None:
                raise ModelConfigError("mini-densenet needs a dense block spec")
            self.block.validate("block")
            if self.transition < 1:
                raise ModelConfigError(
                    f"transition channels must be >= 1, got {self.transition}"
                )
            if len(self.head) != DENSENET_HEAD_LAYERS:
                raise ModelConfigError(
                    f"mini-densenet head must have exactly {DENSENET_HEAD_LAYERS} "
                    f"FC layers, got {len(self.head)}"
                )

    def to_text(self):
        c, h, w = self.input_shape
        lines = [
            f"kind={self.kind}",
            f"input={c}x{h}x{w}",
            f"stem={self.stem.to_text()}",
        ]
        if self.kind == KIND_INCEPTION:
            for i, mod in enumerate(self.modules, start=1):
                lines.append(f"module{i}={mod.to_text()}")
                lines.append(f"module{i}.factorized={int(mod.factorized)}")
            lines.append(f"pool={self.pool[0]},{self.pool[1]}")
        else:
            lines.append(f"block={self.block.to_text()}")
            lines.append(f"transition={self.transition}")
        lines.append("head=" + ",".join(str(hh) for hh in self.head))
        lines.append(f"output={self.output_units}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text):
        pairs = []
        # `;` doubles as a line separator so a spec fits a one-line config value
        for lineno, raw in enumerate(text.replace(";", "\n").splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if "=" not in line:
                raise ModelConfigError(f"model spec line {lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            pairs.append((key.strip(), value.strip()))
        keys = [k for k, _ in pairs]
        if len(set(keys)) != len(keys):
            dup = sorted({k for k in keys if keys.count(k) > 1})[0]
            raise ModelConfigError(f"model spec: duplicate key {dup!r}")
        kv = dict(pairs)

        def take(key):
            try:
                return kv.pop(key)
            except KeyError:
                raise ModelConfigError(f"model spec: missing key {key!r}") from None

        kind = take("kind")
        try:
            input_shape = tuple(int(p) for p in take("input").split("x"))
        except ValueError:
            raise ModelConfigError("model spec: input must look like '1x8x8'") from None
        stem = ConvSpec.from_text(take("stem"), "stem")
        head_text = take("head")
        head = tuple(int(p) for p in head_text.split(",")) if head_text else ()
        output_units = int(take("output"))

        if kind == KIND_INCEPTION:
            modules = []
            i = 1
            while f"module{i}" in kv:
                body = kv.pop(f"module{i}")
                factorized = kv.pop(f"module{i}.factorized", "0") == "1"
                modules.append(
                    InceptionModuleSpec.from_text(body, f"module{i}", factorized=factorized)
                )
                i += 1
            pool = tuple(int(p) for p in take("pool").split(","))
            spec = ModelSpec(
                kind=kind,
                input_shape=input_shape,
                stem=stem,
                modules=tuple(modules),
                pool=pool,
                head=head,
                output_units=output_units,
            )
        else:
            spec = ModelSpec(
                kind=kind,
                input_shape=input_shape,
                stem=stem,
                block=DenseBlockSpec.from_text(take("block"), "block"),
                transition=int(take("transition")),
                head=head,
                output_units=output_units,
            )
        if kv:
            raise ModelConfigError(f"model spec: unknown keys {sorted(kv)}")
        spec.validate()
        return spec


def _init_conv(rng, out_channels, in_channels, kh, kw):
    fan_in = in_channels * kh * kw
    bound = np.sqrt(6.0 / fan_in)
    kernels = rng.uniform(-bound, bound, size=(out_channels, in_channels, kh, kw))
    return (
        Tensor(kernels.astype(np.float32)),
        Tensor(np.zeros(out_channels, dtype=np.float32)),
    )


def _init_dense(rng, in_features, out_features):
    bound = np.sqrt(6.0 / in_features)
    weights = rng.uniform(-bound, bound, size=(in_features, out_features))
    return (
        Tensor(weights.astype(np.float32)),
        Tensor(np.zeros(out_features, dtype=np.float32)),
    )


class _Conv:
    """A same-padded stride-1 conv + relu with named parameters."""

    def __init__(self, rng, name, in_channels, conv_spec, params):
        self.kh, self.kw = conv_spec.kh, conv_spec.kw
        kernels, bias = _init_conv(rng, conv_spec.out_channels, in_channels, self.kh, self.kw)
        params[f"{name}.kernels"] = kernels
        params[f"{name}.bias"] = bias
        self.kernels, self.bias = kernels, bias
        self.out_channels = conv_spec.out_channels

    def forward(self, x):
        out = conv2d(
            x, self.kernels, self.bias, stride=1, padding=(self.kh // 2, self.kw // 2)
        )
        return relu(out)


def _factor_pair(conv_spec):
    """Split a square k x k conv (k > 1) into its 1 x k and k x 1 factors."""
    k = conv_spec.kh
    return (
        ConvSpec(conv_spec.out_channels, 1, k),
        ConvSpec(conv_spec.out_channels, k, 1),
    )


class _Branch:
    def __init__(self, rng, name, in_channels, branch_spec, factorized, params):
        self.pool = branch_spec.pool
        self.convs = []
        channels = in_channels
        for i, conv_spec in enumerate(branch_spec.convs, start=1):
            square = conv_spec.kh == conv_spec.kw
            if factorized and square and conv_spec.kh > 1:
                first, second = _factor_pair(conv_spec)
                self.convs.append(_Conv(rng, f"{name}.conv{i}a", channels, first, params))
                channels = first.out_channels
                self.convs.append(_Conv(rng, f"{name}.conv{i}b", channels, second, params))
            else:
                self.convs.append(_Conv(rng, f"{name}.conv{i}", channels, conv_spec, params))
            channels = conv_spec.out_channels
        self.out_channels = channels

    def forward(self, x):
        if self.pool:
            pad = _BRANCH_POOL_WINDOW // 2
            x = maxpool2d(zero_pad2d(x, pad, pad), _BRANCH_POOL_WINDOW, 1)
        for conv in self.convs:
            x = conv.forward(x)
        return x


class InceptionModule:
    """All branches run on one input; outputs concatenate along channels."""

    def __init__(self, spec, in_channels, rng=None, name="module", params=None):
        spec.validate(name)
        if in_channels < 1:
            raise ModelConfigError(f"{name}: in_channels must be >= 1, got {in_channels}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.params = {} if params is None else params
        self.branches = [
            _Branch(rng, f"{name}.branch{i}", in_channels, b, spec.factorized, self.params)
            for i, b in enumerate(spec.branches, start=1)
        ]
        self.out_channels = sum(b.out_channels for b in self.branches)

    def forward(self, x):
        return concat_channels([b.forward(x) for b in self.branches])


class DenseBlock:
    """Each layer eats the concatenation of the input and all earlier layers."""

    def __init__(self, spec, in_channels, rng=None, name="block", params=None):
        spec.validate(name)
        if in_channels < 1:
            raise ModelConfigError(f"{name}: in_channels must be >= 1, got {in_channels}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.params = {} if params is None else params
        self.layers = []
        channels = in_channels
        for i in range(1, spec.layers + 1):
            conv_spec = ConvSpec(spec.growth, spec.kernel, spec.kernel)
            self.layers.append(_Conv(rng, f"{name}.layer{i}", channels, conv_spec, self.params))
            channels += spec.growth
        self.out_channels = channels

    def forward(self, x):
        features = x
        for layer in self.layers:
            grown = layer.forward(features)
            features = concat_channels([features, grown])
        return features


def build_inception_module(spec, in_channels, rng=None, name="module", params=None):
    return InceptionModule(spec, in_channels, rng=rng, name=name, params=params)


def build_dense_block(spec, in_channels, rng=None, name="block", params=None):
    return DenseBlock(spec, in_channels, rng=rng, name=name, params=params)


class Model:
    """A built backbone: named parameters plus a pure forward pass."""

    def __init__(self, spec, seed):
        spec.validate()
        self.spec = spec
        self.seed = seed
        self.params = {}
        rng = np.random.default_rng(seed)
        c, h, w = spec.input_shape

        self._stem = _Conv(rng, "stem", c, spec.stem, self.params)
        channels = self._stem.out_channels

        if spec.kind == KIND_INCEPTION:
            self._modules = []
            for i, mod_spec in enumerate(spec.modules, start=1):
                mod = InceptionModule(
                    mod_spec, channels, rng=rng, name=f"module{i}", params=self.params
                )
                self._modules.append(mod)
                channels = mod.out_channels
            window, stride = spec.pool
            if window > h or window > w:
                raise ModelConfigError(
                    f"pool window {window} exceeds spatial size {h}x{w} for input "
                    f"{spec.input_shape}"
                )
            ph = (h - window) // stride + 1
            pw = (w - window) // stride + 1
            features = channels * ph * pw
        else:
            self._block = DenseBlock(
                spec.block, channels, rng=rng, name="block", params=self.params
            )
            channels = self._block.out_channels
            self._transition = _Conv(
                rng, "transition", channels, ConvSpec(spec.transition, 1, 1), self.params
            )
            features = spec.transition

        self._head = []
        for i, width in enumerate(spec.head, start=1):
            weights, bias = _init_dense(rng, features, width)
            self.params[f"head.fc{i}.weights"] = weights
            self.params[f"head.fc{i}.bias"] = bias
            self._head.append((weights, bias))
            features = width
        weights, bias = _init_dense(rng, features, spec.output_units)
        self.params["head.out.weights"] = weights
        self.params["head.out.bias"] = bias
        self._out = (weights, bias)

    @property
    def head_fc_count(self):
        return len(self.spec.head)

    def parameters(self):
        return self.params

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def forward(self, batch):
        """Scores for a batch: (N,) in (0,1) for sigmoid, (N,2) rows for softmax."""
        if not isinstance(batch, Tensor):
            batch = Tensor(batch)
        expected = self.spec.input_shape
        if batch.data.ndim != 4 or batch.data.shape[1:] != expected:
            raise ValueError(
                f"model expects batches of shape (N,{expected[0]},{expected[1]},"
                f"{expected[2]}), got {batch.data.shape}"
            )
        x = self._stem.forward(batch)
        if self.spec.kind == KIND_INCEPTION:
            for mod in self._modules:
                x = mod.forward(x)
            window, stride = self.spec.pool
            x = maxpool2d(x, window, stride)
            x = flatten(x)
        else:
            x = self._block.forward(x)
            x = self._transition.forward(x)
            x = global_maxpool(x)
        for weights, bias in self._head:
            x = relu(dense(x, weights, bias))
        weights, bias = self._out
        logits = dense(x, weights, bias)
        if self.spec.output_units == 1:
            return reshape(activate(logits, "sigmoid"), (batch.data.shape[0],))
        return activate(logits, "softmax")

    def scores(self, batch):
        """Probability of class 1 per sample, as a plain float32 array."""
        out = self.forward(batch)
        if self.spec.output_units == 1:
            return out.data.copy()
        return out.data[:, 1].copy()


def build_model(spec, seed):
    return Model(spec, seed)


def default_inception_spec(input_shape=(1, 8, 8)):
    """Stem + two 4-branch modules (second factorized) + 2-layer FC head."""
    branches = (
        BranchSpec(convs=(ConvSpec(8, 1, 1),)),
        BranchSpec(convs=(ConvSpec(4, 1, 1), ConvSpec(16, 3, 3))),
        BranchSpec(convs=(ConvSpec(4, 1, 1), ConvSpec(8, 5, 5))),
        BranchSpec(convs=(ConvSpec(8, 1, 1),), pool=True),
    )
    return ModelSpec(
        kind=KIND_INCEPTION,
        input_shape=input_shape,
        stem=ConvSpec(8, 3, 3),
        modules=(
            InceptionModuleSpec(branches=branches),
            InceptionModuleSpec(branches=branches, factorized=True),
        ),
        pool=(2, 2),
        head=(64, 16),
        output_units=1,
    )


def default_densenet_spec(input_shape=(1, 8, 8)):
    """Stem + dense block (L=4, k=8) + 1x1 transition + 3-layer FC head."""
    return ModelSpec(
        kind=KIND_DENSENET,
        input_shape=input_shape,
        stem=ConvSpec(8, 3, 3),
        block=DenseBlockSpec(layers=4, growth=8, kernel=3),
        transition=16,
        head=(32, 16, 8),
        output_units=1,
    )
