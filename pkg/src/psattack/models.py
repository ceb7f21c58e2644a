"""Classifiers over latents and over raw signals, plus the conv autoencoder.

The latent-space MLP is the model under attack; the small CNNs and the
autoencoder+head pipeline are the signal-domain baselines it is compared
against. Parameters live in a name->array dict; ``training_leaves`` swaps
them for gradient leaves during a training step, attacks see constants.
"""

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .diffcore.nn_ops import conv2d, conv3d, maxpool2d, maxpool3d, upsample2d_nearest
from .diffcore.optim import AdamState

__all__ = [
    "TrainConfig", "ParamClassifier", "SignalClassifier2D", "SignalClassifier3D",
    "ConvAutoencoder", "LatentHead", "training_leaves",
    "train_param_classifier", "train_signal_classifier",
    "train_autoencoder", "train_latent_head", "accuracy",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    lr: float = 1e-4
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("TrainConfig values must be positive")


def _he_linear(rng, din, dout):
    return rng.standard_normal((din, dout)) * np.sqrt(2.0 / din), np.zeros(dout)


def _he_conv(rng, shape):
    fan_in = int(np.prod(shape[:-1]))
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in), np.zeros(shape[-1])


class _ParamModel:
    """Base: named float64 parameter arrays with optional leaf substitution."""

    def __init__(self):
        self.p: dict[str, np.ndarray] = {}
        self._leaves = None

    def _add(self, name, arr):
        self.p[name] = np.asarray(arr, dtype=np.float64)

    def _t(self, name) -> Tensor:
        if self._leaves is not None:
            return self._leaves[name]
        return dc.constant(self.p[name])

    def arrays(self):
        return self.p


@contextmanager
def training_leaves(model: _ParamModel):
    """Expose the model's parameters as gradient leaves (aliasing the arrays)."""
    leaves = {k: dc.tensor(v, requires_grad=True) for k, v in model.p.items()}
    model._leaves = leaves
    try:
        yield leaves
    finally:
        model._leaves = None


class ParamClassifier(_ParamModel):
    """ReLU MLP over latent vectors."""

    def __init__(self, input_dim: int, n_classes: int,
                 hidden=(512, 512, 512), seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        dims = [input_dim, *hidden, n_classes]
        self.n_layers = len(dims) - 1
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            w, bias = _he_linear(rng, a, b)
            self._add(f"w{i}", w)
            self._add(f"b{i}", bias)
        self.input_dim = input_dim
        self.n_classes = n_classes

    def logits(self, v, capture=None) -> Tensor:
        t = v if isinstance(v, Tensor) else dc.constant(np.asarray(v, float))
        single = len(t.shape) == 1
        if single:
            t = dc.reshape(t, (1, t.shape[0]))
        if t.shape[-1] != self.input_dim:
            raise dc.ShapeError(
                f"classifier input dim {t.shape[-1]} != expected {self.input_dim}")
        h = t
        for i in range(self.n_layers):
            h = dc.linear(h, self._t(f"w{i}"), self._t(f"b{i}"))
            if i < self.n_layers - 1:
                h = dc.relu(h)
            if capture is not None:
                capture.append(h)
        return dc.reshape(h, (self.n_classes,)) if single else h

    def probs(self, v) -> np.ndarray:
        with dc.no_grad():
            return dc.softmax(self.logits(v), axis=-1).data

    def predict(self, v) -> np.ndarray:
        p = self.probs(v)
        return np.argmax(p, axis=-1)


class SignalClassifier2D(_ParamModel):
    """Two conv layers with a single max-pool between them, then a linear head."""

    def __init__(self, grid_shape, n_classes: int, channels=(16, 32), seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        H, W = grid_shape
        if H % 2 or W % 2:
            raise ValueError("2-d grid must be even for the pooling stage")
        c1, c2 = channels
        for name, pair in [("c1", _he_conv(rng, (3, 3, 1, c1))),
                           ("c2", _he_conv(rng, (3, 3, c1, c2))),
                           ("h", _he_linear(rng, (H // 2) * (W // 2) * c2, n_classes))]:
            self._add(f"{name}w", pair[0])
            self._add(f"{name}b", pair[1])
        self.grid_shape = tuple(grid_shape)
        self.n_classes = n_classes

    def logits(self, x, capture=None) -> Tensor:
        t = x if isinstance(x, Tensor) else dc.constant(np.asarray(x, float))
        single = len(t.shape) == 2
        if single:
            t = dc.reshape(t, (1, *t.shape))
        B = t.shape[0]
        h = dc.reshape(t, (B, *self.grid_shape, 1))
        h = dc.relu(conv2d(h, self._t("c1w"), self._t("c1b"), pad=1))
        if capture is not None:
            capture.append(h)
        h = maxpool2d(h, 2)
        h = dc.relu(conv2d(h, self._t("c2w"), self._t("c2b"), pad=1))
        if capture is not None:
            capture.append(h)
        h = dc.reshape(h, (B, int(np.prod(h.shape[1:]))))
        out = dc.linear(h, self._t("hw"), self._t("hb"))
        if capture is not None:
            capture.append(out)
        return dc.reshape(out, (self.n_classes,)) if single else out

    def predict(self, x) -> np.ndarray:
        with dc.no_grad():
            lg = self.logits(x)
        data = lg.data if len(lg.shape) == 2 else lg.data[None, :]
        return np.argmax(data, axis=-1)


class SignalClassifier3D(_ParamModel):
    """Volumetric baseline: two 3-d conv layers with pooling, linear head."""

    def __init__(self, grid_shape, n_classes: int, channels=(8, 16), seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        H, W, D = grid_shape
        c1, c2 = channels
        self._even = (H % 2, W % 2, D % 2)
        eh, ew, ed = H + H % 2, W + W % 2, D + D % 2
        for name, pair in [("c1", _he_conv(rng, (3, 3, 3, 1, c1))),
                           ("c2", _he_conv(rng, (3, 3, 3, c1, c2))),
                           ("h", _he_linear(rng, (eh // 2) * (ew // 2) * (ed // 2) * c2,
                                            n_classes))]:
            self._add(f"{name}w", pair[0])
            self._add(f"{name}b", pair[1])
        self.grid_shape = tuple(grid_shape)
        self.n_classes = n_classes

    def logits(self, x, capture=None) -> Tensor:
        t = x if isinstance(x, Tensor) else dc.constant(np.asarray(x, float))
        single = len(t.shape) == 3
        if single:
            t = dc.reshape(t, (1, *t.shape))
        B = t.shape[0]
        h = dc.reshape(t, (B, *self.grid_shape, 1))
        h = dc.relu(conv3d(h, self._t("c1w"), self._t("c1b"), pad=1))
        if capture is not None:
            capture.append(h)
        if any(self._even):
            h = _pad_high(h, self._even)
        h = maxpool3d(h, 2)
        h = dc.relu(conv3d(h, self._t("c2w"), self._t("c2b"), pad=1))
        if capture is not None:
            capture.append(h)
        h = dc.reshape(h, (B, int(np.prod(h.shape[1:]))))
        out = dc.linear(h, self._t("hw"), self._t("hb"))
        if capture is not None:
            capture.append(out)
        return dc.reshape(out, (self.n_classes,)) if single else out

    def predict(self, x) -> np.ndarray:
        with dc.no_grad():
            lg = self.logits(x)
        data = lg.data if len(lg.shape) == 2 else lg.data[None, :]
        return np.argmax(data, axis=-1)


def _pad_high(h: Tensor, pad_flags) -> Tensor:
    """Zero-pad odd spatial dims on the high side so 2x pooling applies."""
    from .diffcore.tensor import make_node, slice_take

    pads = [(0, 0)] + [(0, int(p)) for p in pad_flags] + [(0, 0)]
    data = np.pad(h.data, pads)
    crop = tuple(slice(0, s) for s in h.shape)
    return make_node("pad_high", data, (h,), lambda g: (slice_take(g, crop),))


class ConvAutoencoder(_ParamModel):
    """Three conv layers down to a dense latent, mirrored decoder."""

    def __init__(self, grid_shape, latent_dim: int = 128, channels=(8, 16, 16),
                 seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        H, W = grid_shape
        if H % 4 or W % 4:
            raise ValueError("autoencoder grid must be divisible by 4")
        c1, c2, c3 = channels
        spec = [
            ("enc1", _he_conv(rng, (3, 3, 1, c1))),
            ("enc2", _he_conv(rng, (3, 3, c1, c2))),
            ("enc3", _he_conv(rng, (3, 3, c2, c3))),
            ("lat", _he_linear(rng, (H // 4) * (W // 4) * c3, latent_dim)),
            ("unlat", _he_linear(rng, latent_dim, (H // 4) * (W // 4) * c3)),
            ("dec1", _he_conv(rng, (3, 3, c3, c1))),
            ("dec2", _he_conv(rng, (3, 3, c1, 1))),
        ]
        for name, (w, b) in spec:
            self._add(f"{name}w", w)
            self._add(f"{name}b", b)
        self.grid_shape = tuple(grid_shape)
        self.latent_dim = latent_dim
        self.channels = channels

    def encode(self, x, capture=None) -> Tensor:
        t = x if isinstance(x, Tensor) else dc.constant(np.asarray(x, float))
        single = len(t.shape) == 2
        if single:
            t = dc.reshape(t, (1, *t.shape))
        B = t.shape[0]
        h = dc.reshape(t, (B, *self.grid_shape, 1))
        h = dc.relu(conv2d(h, self._t("enc1w"), self._t("enc1b"), pad=1))
        if capture is not None:
            capture.append(h)
        h = maxpool2d(h, 2)
        h = dc.relu(conv2d(h, self._t("enc2w"), self._t("enc2b"), pad=1))
        if capture is not None:
            capture.append(h)
        h = maxpool2d(h, 2)
        h = dc.relu(conv2d(h, self._t("enc3w"), self._t("enc3b"), pad=1))
        if capture is not None:
            capture.append(h)
        h = dc.reshape(h, (B, int(np.prod(h.shape[1:]))))
        z = dc.linear(h, self._t("latw"), self._t("latb"))
        if capture is not None:
            capture.append(z)
        return dc.reshape(z, (self.latent_dim,)) if single else z

    def decode(self, z) -> Tensor:
        t = z if isinstance(z, Tensor) else dc.constant(np.asarray(z, float))
        single = len(t.shape) == 1
        if single:
            t = dc.reshape(t, (1, t.shape[0]))
        B = t.shape[0]
        H, W = self.grid_shape
        c3 = self.channels[2]
        h = dc.relu(dc.linear(t, self._t("unlatw"), self._t("unlatb")))
        h = dc.reshape(h, (B, H // 4, W // 4, c3))
        h = upsample2d_nearest(h, 2)
        h = dc.relu(conv2d(h, self._t("dec1w"), self._t("dec1b"), pad=1))
        h = upsample2d_nearest(h, 2)
        h = conv2d(h, self._t("dec2w"), self._t("dec2b"), pad=1)
        out = dc.sigmoid(dc.reshape(h, (B, H, W)))
        return dc.reshape(out, (H, W)) if single else out


class LatentHead(_ParamModel):
    """Classifier over frozen encoder latents: two hidden layers, one relu."""

    def __init__(self, latent_dim: int, n_classes: int, hidden: int = 64,
                 seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        for i, (a, b) in enumerate([(latent_dim, hidden), (hidden, hidden),
                                    (hidden, n_classes)]):
            w, bias = _he_linear(rng, a, b)
            self._add(f"w{i}", w)
            self._add(f"b{i}", bias)
        self.latent_dim = latent_dim
        self.n_classes = n_classes

    def logits(self, z, capture=None) -> Tensor:
        t = z if isinstance(z, Tensor) else dc.constant(np.asarray(z, float))
        single = len(t.shape) == 1
        if single:
            t = dc.reshape(t, (1, t.shape[0]))
        h = dc.linear(t, self._t("w0"), self._t("b0"))
        h = dc.relu(h)
        if capture is not None:
            capture.append(h)
        h = dc.linear(h, self._t("w1"), self._t("b1"))
        if capture is not None:
            capture.append(h)
        out = dc.linear(h, self._t("w2"), self._t("b2"))
        if capture is not None:
            capture.append(out)
        return dc.reshape(out, (self.n_classes,)) if single else out

    def predict(self, z) -> np.ndarray:
        with dc.no_grad():
            lg = self.logits(z)
        data = lg.data if len(lg.shape) == 2 else lg.data[None, :]
        return np.argmax(data, axis=-1)


def _train_ce(model, forward, inputs, labels, cfg: TrainConfig):
    """Generic minibatch cross-entropy training loop."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    opt = AdamState(list(model.p.values()), lr=cfg.lr)
    n = len(labels)
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        ep = []
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            with training_leaves(model) as leaves:
                lg = forward(inputs[idx])
                loss = dc.cross_entropy(lg, labels[idx])
                if not np.isfinite(loss.item()):
                    raise dc.NonFiniteError(f"training diverged at epoch {epoch}")
                grads = dc.grad(loss, list(leaves.values()))
            opt.step([g.data for g in grads])
            ep.append(loss.item())
        curve.append(float(np.mean(ep)) if ep else float("nan"))
    return curve


def train_param_classifier(modulations: np.ndarray, labels, cfg: TrainConfig,
                           hidden=(512, 512, 512), n_classes=None):
    """Train the latent-space MLP; returns (model, loss curve)."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empty training set")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    model = ParamClassifier(modulations.shape[1], n_classes, hidden=hidden,
                            seed=cfg.seed)
    curve = _train_ce(model, model.logits, np.asarray(modulations, float),
                      labels, cfg)
    return model, curve


def train_signal_classifier(signals: np.ndarray, labels, cfg: TrainConfig,
                            modality: str = "image2d", channels=None,
                            n_classes=None):
    """Train a signal-domain CNN baseline on stacked grids."""
    labels = np.asarray(labels, dtype=np.int64)
    signals = np.asarray(signals, dtype=np.float64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if modality == "image2d":
        model = SignalClassifier2D(signals.shape[1:], n_classes,
                                   channels=channels or (16, 32), seed=cfg.seed)
    elif modality == "voxel3d":
        model = SignalClassifier3D(signals.shape[1:], n_classes,
                                   channels=channels or (8, 16), seed=cfg.seed)
    else:
        raise ValueError(f"unknown modality '{modality}'")
    curve = _train_ce(model, model.logits, signals, labels, cfg)
    return model, curve


def train_autoencoder(signals: np.ndarray, cfg: TrainConfig,
                      latent_dim: int = 128):
    """Self-supervised reconstruction training; returns (model, curve)."""
    signals = np.asarray(signals, dtype=np.float64)
    model = ConvAutoencoder(signals.shape[1:], latent_dim=latent_dim,
                            seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    opt = AdamState(list(model.p.values()), lr=cfg.lr)
    n = signals.shape[0]
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        ep = []
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            batch = dc.constant(signals[idx])
            with training_leaves(model) as leaves:
                rec = model.decode(model.encode(batch))
                loss = dc.mse(rec, batch)
                if not np.isfinite(loss.item()):
                    raise dc.NonFiniteError(f"autoencoder diverged at epoch {epoch}")
                grads = dc.grad(loss, list(leaves.values()))
            opt.step([g.data for g in grads])
            ep.append(loss.item())
        curve.append(float(np.mean(ep)))
    return model, curve


def train_latent_head(encoder: ConvAutoencoder, signals: np.ndarray, labels,
                      cfg: TrainConfig, hidden: int = 64):
    """Train the classification head on frozen encoder latents."""
    with dc.no_grad():
        lat = encoder.encode(np.asarray(signals, float)).data
    labels = np.asarray(labels, dtype=np.int64)
    head = LatentHead(encoder.latent_dim, int(labels.max()) + 1, hidden=hidden,
                      seed=cfg.seed)
    curve = _train_ce(head, head.logits, lat, labels, cfg)
    return head, curve


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    return float((predictions == labels).mean()) if len(labels) else float("nan")
