"""The three forecasting architectures over an (L hours x S stations) window."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .nn import functional as F
from .nn import init
from .nn.tensor import Parameter, Tensor, as_tensor, concat, mean, relu, reshape, transpose

N_CLASSES = 4
KINDS = ("lstm", "cnn", "utime")

_DEFAULT_LAYERS = {
    "lstm": {"units": [50, 10], "dropout": 0.05},
    "cnn": {"conv": [[16, 5], [64, 3]], "dense": 20, "dropout": 0.05},
    "utime": {"widths": [16, 32, 64, 128, 256], "kernel": 3, "crop": 160, "required_window": 168},
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    window: int
    stations: int
    classes: int = N_CLASSES
    layers: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.classes != N_CLASSES:
            raise InputError("models predict exactly four alert levels")
        if self.window < 1 or self.stations < 1:
            raise InputError("input extents must be positive")
        merged = copy.deepcopy(_DEFAULT_LAYERS[self.kind])
        merged.update(copy.deepcopy(self.layers))
        object.__setattr__(self, "layers", merged)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "window": self.window, "stations": self.stations,
                "classes": self.classes, "layers": self.layers}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["kind"], d["window"], d["stations"], d.get("classes", N_CLASSES), d.get("layers", {}))


class Model:
    """Ordered named parameters plus a batched forward pass returning logits."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self._params: dict[str, Parameter] = {}

    def _add(self, name: str, value: np.ndarray) -> Parameter:
        p = Parameter(value, name=name)
        self._params[name] = p
        return p

    def named_parameters(self):
        return list(self._params.items())

    def parameters(self):
        return list(self._params.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def layer_counts(self) -> dict[str, int]:
        """Parameter count per layer (prefix before the first dot)."""
        out: dict[str, int] = {}
        for name, p in self._params.items():
            layer = name.split(".")[0]
            out[layer] = out.get(layer, 0) + p.size
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            raise InputError("state does not match the model's parameters")
        for k, p in self._params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != p.shape:
                raise InputError(f"parameter {k}: shape {v.shape} != {p.shape}")
            p.data = v.copy()
            p.zero_grad()

    def _check_input(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim == 2:
            x = Tensor(x.data[None])
        if x.shape[1:] != (self.spec.window, self.spec.stations):
            raise InputError(f"expected windows of shape {(self.spec.window, self.spec.stations)}, "
                             f"got {x.shape[1:]}")
        return x

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.forward(x, training=False).data, axis=-1)


class LSTMClassifier(Model):
    """Stacked LSTM layers, dropout, then a 4-way dense head on the last step."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec)
        n_in = spec.stations
        self.n_layers = len(spec.layers["units"])
        for i, hidden in enumerate(spec.layers["units"]):
            w_in, w_rec, b = init.lstm_weights(rng, n_in, hidden)
            self._add(f"lstm{i + 1}.w_in", w_in)
            self._add(f"lstm{i + 1}.w_rec", w_rec)
            self._add(f"lstm{i + 1}.bias", b)
            n_in = hidden
        self._add("head.weight", init.glorot_uniform(rng, (n_in, N_CLASSES), n_in, N_CLASSES))
        self._add("head.bias", np.zeros(N_CLASSES))

    def forward(self, x, training=False, rng=None):
        h = self._check_input(x)
        p = self._params
        for i in range(1, self.n_layers + 1):
            h = F.lstm(h, p[f"lstm{i}.w_in"], p[f"lstm{i}.w_rec"], p[f"lstm{i}.bias"])
        last = h[:, -1, :]
        last = F.dropout(last, self.spec.layers["dropout"], rng, training)
        return F.dense(last, p["head.weight"], p["head.bias"])


class CNNClassifier(Model):
    """conv-relu-pool twice over the hours x stations image, dense-relu, dropout, dense."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec)
        convs = spec.layers["conv"]
        h, w = spec.window, spec.stations
        if h // 2 ** len(convs) < 1 or w // 2 ** len(convs) < 1:
            raise InputError(f"window {h}x{w} too small for {len(convs)} pooling stages")
        c_in = 1
        for i, (c_out, k) in enumerate(convs):
            self._add(f"conv{i + 1}.weight", init.conv_weight(rng, c_out, c_in, k, k))
            self._add(f"conv{i + 1}.bias", np.zeros(c_out))
            c_in = c_out
            h, w = h // 2, w // 2
        self.flat_features = c_in * h * w
        hidden = spec.layers["dense"]
        self._add("fc.weight", init.glorot_uniform(rng, (self.flat_features, hidden), self.flat_features, hidden))
        self._add("fc.bias", np.zeros(hidden))
        self._add("head.weight", init.glorot_uniform(rng, (hidden, N_CLASSES), hidden, N_CLASSES))
        self._add("head.bias", np.zeros(N_CLASSES))

    def features(self, x) -> Tensor:
        x = self._check_input(x)
        p = self._params
        h = reshape(x, (x.shape[0], 1, self.spec.window, self.spec.stations))
        for i in range(1, len(self.spec.layers["conv"]) + 1):
            h = F.maxpool2d(relu(F.conv2d(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"])))
        return reshape(h, (h.shape[0], -1))

    def forward(self, x, training=False, rng=None):
        p = self._params
        h = F.dense(self.features(x), p["fc.weight"], p["fc.bias"], "relu")
        h = F.dropout(h, self.spec.layers["dropout"], rng, training)
        return F.dense(h, p["head.weight"], p["head.bias"])


class UTimeClassifier(Model):
    """1-D U-shaped encoder/decoder over time with stations as channels.

    The window is cropped to its most recent ``crop`` hours. Each encoder
    stage is two same-padded conv-relu layers followed by a 2x temporal max
    pool; a valid convolution then collapses the remaining time axis to a
    single latent step. The decoder repeats the latent back up, and each
    stage upsamples 2x, concatenates the matching encoder output and applies
    two conv-relu layers. A time average and a dense layer give the logits.
    """

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec)
        widths = spec.layers["widths"]
        k = spec.layers["kernel"]
        crop = spec.layers["crop"]
        need = spec.layers.get("required_window")
        if need is not None and spec.window != need:
            raise InputError(f"U-Time is configured for {need}-hour windows only, got {spec.window}")
        if spec.window < crop:
            raise InputError(f"U-Time needs at least {crop} hours of input, got {spec.window}")
        if crop % 2 ** len(widths):
            raise InputError(f"crop {crop} is not divisible by 2^{len(widths)}")
        self.crop = crop
        self.latent_in = crop // 2 ** len(widths)
        c_in = spec.stations
        for i, c in enumerate(widths):
            self._add(f"enc{i + 1}.w1", init.conv_weight(rng, c, c_in, k))
            self._add(f"enc{i + 1}.b1", np.zeros(c))
            self._add(f"enc{i + 1}.w2", init.conv_weight(rng, c, c, k))
            self._add(f"enc{i + 1}.b2", np.zeros(c))
            c_in = c
        self._add("latent.weight", init.conv_weight(rng, c_in, c_in, self.latent_in))
        self._add("latent.bias", np.zeros(c_in))
        for i in reversed(range(len(widths))):
            c = widths[i]
            self._add(f"dec{i + 1}.w1", init.conv_weight(rng, c, c_in + c, k))
            self._add(f"dec{i + 1}.b1", np.zeros(c))
            self._add(f"dec{i + 1}.w2", init.conv_weight(rng, c, c, k))
            self._add(f"dec{i + 1}.b2", np.zeros(c))
            c_in = c
        self._add("head.weight", init.glorot_uniform(rng, (c_in, N_CLASSES), c_in, N_CLASSES))
        self._add("head.bias", np.zeros(N_CLASSES))

    def cropped_input(self, x) -> Tensor:
        """(N, stations, crop): the most recent ``crop`` hours, channels first."""
        x = self._check_input(x)
        return transpose(x[:, -self.crop:, :], (0, 2, 1))

    def encode(self, x):
        """Returns ``(latent, skips)``; latent is (N, channels, 1)."""
        p = self._params
        h = self.cropped_input(x)
        skips = []
        for i in range(1, len(self.spec.layers["widths"]) + 1):
            h = relu(F.conv1d(h, p[f"enc{i}.w1"], p[f"enc{i}.b1"]))
            h = relu(F.conv1d(h, p[f"enc{i}.w2"], p[f"enc{i}.b2"]))
            skips.append(h)
            h = F.maxpool1d(h)
        latent = relu(F.conv1d(h, p["latent.weight"], p["latent.bias"], padding="valid"))
        return latent, skips

    def forward(self, x, training=False, rng=None):
        p = self._params
        latent, skips = self.encode(x)
        h = F.upsample1d(latent, self.latent_in)
        for i in reversed(range(1, len(skips) + 1)):
            h = concat([F.upsample1d(h, 2), skips[i - 1]], axis=1)
            h = relu(F.conv1d(h, p[f"dec{i}.w1"], p[f"dec{i}.b1"]))
            h = relu(F.conv1d(h, p[f"dec{i}.w2"], p[f"dec{i}.b2"]))
        pooled = mean(h, axis=2)
        return F.dense(pooled, p["head.weight"], p["head.bias"])


_BUILDERS = {"lstm": LSTMClassifier, "cnn": CNNClassifier, "utime": UTimeClassifier}


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    return _BUILDERS[spec.kind](spec, np.random.default_rng(seed))


def build_lstm(window: int, stations: int = 12, seed: int = 0, **layers) -> LSTMClassifier:
    return build_model(ModelSpec("lstm", window, stations, layers=layers), seed)


def build_cnn(window: int, stations: int = 12, seed: int = 0, **layers) -> CNNClassifier:
    return build_model(ModelSpec("cnn", window, stations, layers=layers), seed)


def build_utime(window: int = 168, stations: int = 12, seed: int = 0, **layers) -> UTimeClassifier:
    return build_model(ModelSpec("utime", window, stations, layers=layers), seed)
