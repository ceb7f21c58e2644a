"""SIREN implicit representations with a shared-weights / per-sample latent split.

A single set of sine-layer weights plus a linear decoder are shared across a
dataset; each signal is represented by a low-dimensional latent vector whose
decoded bias shifts condition the network. Fitting a signal runs a fixed
number of optimizer steps over the latent only, and that loop can be recorded
on the differentiation tape so gradients flow from downstream losses back to
the signal being fitted.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .diffcore.optim import adam_step_graph, sgd_step_graph, AdamState

__all__ = [
    "SirenProfile", "SirenSharedWeights", "Modulation", "Signal", "FitConfig",
    "PROFILE_FULL_2D", "PROFILE_TEST_2D", "PROFILE_FULL_3D", "PROFILE_TEST_3D",
    "init_shared_weights", "coordinate_grid", "siren_forward",
    "fit_modulation", "fit_latent", "fit_shared_weights", "reconstruct", "psnr",
]


@dataclass(frozen=True)
class SirenProfile:
    """Architecture knobs for the shared SIREN."""

    coord_dim: int = 2
    out_dim: int = 1
    depth: int = 10          # total linear layers, final one without sine
    hidden_dim: int = 256
    latent_dim: int = 512
    omega0: float = 30.0


# full profiles follow the published functa recipes; the test profile keeps
# oracle tests (finite differences over whole pipelines) fast
PROFILE_FULL_2D = SirenProfile()
PROFILE_TEST_2D = SirenProfile(depth=2, hidden_dim=16, latent_dim=8)
PROFILE_FULL_3D = SirenProfile(coord_dim=3, latent_dim=2048)
PROFILE_TEST_3D = SirenProfile(coord_dim=3, depth=3, hidden_dim=16, latent_dim=16)


@dataclass
class SirenSharedWeights:
    """Dataset-shared SIREN parameters plus the latent-to-bias decoder."""

    weights: list          # per-layer (in, out) float64 matrices
    biases: list           # per-layer (out,) base biases
    decoder: np.ndarray    # (total_bias_count, latent_dim)
    profile: SirenProfile

    def __post_init__(self):
        total = sum(b.shape[0] for b in self.biases)
        if self.decoder.shape[0] != total:
            raise ValueError(
                f"decoder rows {self.decoder.shape[0]} != total bias count {total}")
        for arr in [*self.weights, *self.biases, self.decoder]:
            if not np.all(np.isfinite(arr)):
                raise ValueError("shared weights contain non-finite values")

    @property
    def latent_dim(self) -> int:
        return self.decoder.shape[1]

    def bias_slices(self):
        out, start = [], 0
        for b in self.biases:
            out.append((start, start + b.shape[0]))
            start += b.shape[0]
        return out

    def arrays(self):
        """Flat name->array view used by checkpoints."""
        named = {"decoder": self.decoder}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"w{i}"] = w
            named[f"b{i}"] = b
        return named


@dataclass
class Modulation:
    """Per-sample latent with fit statistics."""

    v: np.ndarray
    fit_steps_used: int = 0
    final_fit_loss: float = float("nan")
    # populated only by recorded fits; nodes live on the caller's tape
    v_node: Optional[Tensor] = None
    loss_node: Optional[Tensor] = None

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64)
        if not np.all(np.isfinite(self.v)):
            raise ValueError("modulation has non-finite entries")


@dataclass
class Signal:
    """A gridded signal with its normalized coordinate lattice."""

    modality: str                    # "image2d" | "voxel3d"
    values: np.ndarray               # grid-shaped, [0,1] images / {0,1} voxels
    raw: Optional[np.ndarray] = None # unclamped reconstruction, when applicable
    label: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.modality == "image2d" and self.values.ndim != 2:
            raise ValueError(f"image2d signal must be 2-d, got {self.values.shape}")
        if self.modality == "voxel3d" and self.values.ndim != 3:
            raise ValueError(f"voxel3d signal must be 3-d, got {self.values.shape}")
        lo, hi = float(self.values.min(initial=0.0)), float(self.values.max(initial=0.0))
        if lo < -1e-9 or hi > 1 + 1e-9:
            raise ValueError(f"signal values outside [0,1]: [{lo}, {hi}]")

    @property
    def grid_shape(self):
        return self.values.shape

    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1, 1)


@dataclass(frozen=True)
class FitConfig:
    """Inner-loop settings for fitting one latent."""

    n_steps: int = 10
    lr: float = 0.01
    optimizer: str = "adam"    # "adam" | "sgd"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown inner optimizer '{self.optimizer}'")


FIT_2D_DEFAULT = FitConfig(n_steps=10, lr=0.01)
FIT_3D_DEFAULT = FitConfig(n_steps=500, lr=0.01)


def init_shared_weights(profile: SirenProfile, seed: int = 0) -> SirenSharedWeights:
    """Standard SIREN init; decoder starts at zero so v=0 is the unmodulated net."""
    rng = np.random.default_rng(seed)
    dims = [profile.coord_dim] + [profile.hidden_dim] * (profile.depth - 1) + [profile.out_dim]
    weights, biases = [], []
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        if i == 0:
            bound = 1.0 / din
        else:
            bound = np.sqrt(6.0 / din) / profile.omega0
        weights.append(rng.uniform(-bound, bound, size=(din, dout)))
        biases.append(np.zeros(dout))
    total = sum(b.shape[0] for b in biases)
    # nonzero decoder init: a zero decoder would make latents gradient-dead
    bound = 1.0 / np.sqrt(profile.latent_dim)
    decoder = rng.uniform(-bound, bound, size=(total, profile.latent_dim))
    return SirenSharedWeights(weights, biases, decoder, profile)


def coordinate_grid(grid_shape) -> np.ndarray:
    """Row-major lattice over [-1, 1]^m, shape (prod(grid), m)."""
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in grid_shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _weight_tensors(shared: SirenSharedWeights, override=None):
    if override is not None:
        return override["weights"], override["biases"], override["decoder"]
    ws = [dc.constant(w) for w in shared.weights]
    bs = [dc.constant(b) for b in shared.biases]
    return ws, bs, dc.constant(shared.decoder)


def siren_forward(shared: SirenSharedWeights, v, coords,
                  weights_override=None, capture=None) -> Tensor:
    """Evaluate the conditioned SIREN on a coordinate batch.

    v: (d,) or (B, d) latent (Tensor or array). coords: (P, m) array/Tensor.
    Returns (P, out) for a single latent, else (B, P, out). When ``capture``
    is a list, per-layer post-activation tensors are appended to it.
    """
    prof = shared.profile
    coords_t = coords if isinstance(coords, Tensor) else dc.constant(coords)
    if coords_t.shape[-1] != prof.coord_dim:
        raise dc.ShapeError(
            f"coords dim {coords_t.shape[-1]} != coord_dim {prof.coord_dim}")
    v_t = v if isinstance(v, Tensor) else dc.constant(v)
    single = len(v_t.shape) == 1
    if single:
        v_t = dc.reshape(v_t, (1, v_t.shape[0]))
    B = v_t.shape[0]
    P = coords_t.shape[0]

    ws, bs, dec = _weight_tensors(shared, weights_override)
    shift = dc.matmul(v_t, dc.transpose(dec))           # (B, total)
    slices = shared.bias_slices()

    h = dc.expand(dc.reshape(coords_t, (1, P, prof.coord_dim)),
                  (B, P, prof.coord_dim))
    n_layers = len(ws)
    for i in range(n_layers):
        lo, hi = slices[i]
        shift_i = dc.reshape(dc.slice_take(shift, (slice(None), slice(lo, hi))),
                             (B, 1, hi - lo))
        bias_i = dc.add(dc.reshape(bs[i], (1, 1, hi - lo)), shift_i)
        z = dc.linear(h, ws[i], bias_i)
        h = z if i == n_layers - 1 else dc.sin_scale(z, prof.omega0)
        if capture is not None:
            capture.append(h)
    if single:
        return dc.reshape(h, (P, prof.out_dim))
    return h


def _per_sample_mse(pred: Tensor, target: Tensor) -> Tensor:
    """(B,) mean squared error per sample over all remaining axes."""
    d = dc.sub(pred, target)
    return dc.tmean(dc.power(d, 2.0), axis=tuple(range(1, len(pred.shape))))


def fit_latent(shared: SirenSharedWeights, target: Tensor, cfg: FitConfig,
               coords=None, v0=None, record: bool = False,
               weights_override=None, opt_state=None, return_state=False):
    """Fit latents for a batch of targets; the differentiable core of R(x).

    target: (B, P, out) Tensor; may carry a graph (perturbed signals) in which
    case ``record`` must be set so the optimizer steps stay on that tape.
    Returns (v, per_sample_losses[, opt_state]) where v is a (B, d) Tensor:
    a recorded graph node when ``record``, otherwise a plain tensor.
    ``opt_state`` lets callers carry moment estimates across segment cuts;
    the returned state is detached.
    """
    if coords is None:
        raise ValueError("fit_latent needs the coordinate batch")
    if target.requires_grad and not record:
        raise ValueError("target carries a graph; pass record=True")
    B = target.shape[0]
    d = shared.latent_dim
    if v0 is None:
        v = dc.tensor(np.zeros((B, d)), requires_grad=True)
    else:
        v0_arr = v0.data if isinstance(v0, Tensor) else np.asarray(v0, dtype=np.float64)
        if v0_arr.shape != (B, d):
            raise dc.ShapeError(f"v0 shape {v0_arr.shape} != ({B}, {d})")
        v = dc.tensor(v0_arr.copy(), requires_grad=True)

    state: dict = {} if opt_state is None else dict(opt_state)
    losses = []
    for step in range(cfg.n_steps):
        pred = siren_forward(shared, v, coords, weights_override=weights_override)
        per = _per_sample_mse(pred, target)
        loss = dc.tsum(per)
        if not np.isfinite(loss.item()):
            raise dc.NonFiniteError(f"fit diverged: non-finite loss at step {step}")
        losses.append(per.data.copy())
        g = dc.grad(loss, v, retain=record)
        if record:
            if cfg.optimizer == "adam":
                v = adam_step_graph(v, g, state, cfg.lr)
            else:
                v = sgd_step_graph(v, g, cfg.lr)
        else:
            with dc.no_grad():
                if cfg.optimizer == "adam":
                    v_new = adam_step_graph(v, g, state, cfg.lr)
                else:
                    v_new = sgd_step_graph(v, g, cfg.lr)
            v = dc.tensor(v_new.data, requires_grad=True)
    if not return_state:
        return v, losses
    out_state = {"t": state.get("t", 0)}
    for key in ("m", "v"):
        val = state.get(key)
        if val is not None:
            out_state[key] = val.data.copy() if isinstance(val, Tensor) else np.copy(val)
    return v, losses, out_state


def fit_modulation(shared: SirenSharedWeights, signal: Signal, cfg: FitConfig,
                   init: Optional[Modulation] = None,
                   record_tape: bool = False) -> Modulation:
    """Run cfg.n_steps latent-only optimizer steps against one signal."""
    coords = coordinate_grid(signal.grid_shape)
    target = dc.constant(signal.flat_values()[None, :, :])
    v0 = None if init is None else init.v[None, :]
    v, _ = fit_latent(shared, target, cfg, coords=coords, v0=v0, record=record_tape)
    with dc.no_grad():
        pred = siren_forward(shared, v.detach(), coords)
        final = float(_per_sample_mse(pred, target).data[0])
    mod = Modulation(v.data[0].copy(), fit_steps_used=cfg.n_steps, final_fit_loss=final)
    if record_tape:
        mod.v_node = v
        pred_g = siren_forward(shared, v, coords)
        mod.loss_node = dc.tsum(_per_sample_mse(pred_g, target))
    return mod


def fit_shared_weights(dataset, epochs: int, inner_steps: int = 3,
                       outer_lr: float = 5e-6, batch_size: int = 128,
                       profile: SirenProfile = PROFILE_FULL_2D,
                       inner_lr: float = 0.01, seed: int = 0,
                       init: Optional[SirenSharedWeights] = None,
                       log_every: int = 0):
    """Meta-train shared weights + decoder over a dataset of Signals.

    Per batch: latents are fitted from zero for ``inner_steps`` with the
    current weights held constant, then one outer Adam step updates weights
    and decoder on the post-fit reconstruction loss (first-order updates:
    outer gradients do not flow through the inner loop).
    Returns (shared, per-epoch mean losses).
    """
    if not dataset:
        raise ValueError("fit_shared_weights: empty dataset")
    shared = init if init is not None else init_shared_weights(profile, seed=seed)
    prof = shared.profile
    coords = coordinate_grid(dataset[0].grid_shape)
    targets = np.stack([s.flat_values() for s in dataset])  # (N, P, out)
    n = len(dataset)
    rng = np.random.default_rng(seed + 1)
    params = [*shared.weights, *shared.biases, shared.decoder]
    opt = AdamState(params, lr=outer_lr)
    inner_cfg = FitConfig(n_steps=inner_steps, lr=inner_lr)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            target = dc.constant(targets[idx])
            v, _ = fit_latent(shared, target, inner_cfg, coords=coords)
            w_leaves = [dc.tensor(w, requires_grad=True) for w in shared.weights]
            b_leaves = [dc.tensor(b, requires_grad=True) for b in shared.biases]
            dec_leaf = dc.tensor(shared.decoder, requires_grad=True)
            override = {"weights": w_leaves, "biases": b_leaves, "decoder": dec_leaf}
            pred = siren_forward(shared, v.detach(), coords, weights_override=override)
            loss = dc.tmean(_per_sample_mse(pred, target))
            if not np.isfinite(loss.item()):
                raise dc.NonFiniteError(
                    f"meta training diverged at epoch {epoch}, batch start {start}")
            leaves = [*w_leaves, *b_leaves, dec_leaf]
            grads = dc.grad(loss, leaves)
            opt.step([g.data for g in grads])
            epoch_losses.append(loss.item())
        curve.append(float(np.mean(epoch_losses)))
        if log_every and (epoch + 1) % log_every == 0:
            print(f"  shared-weights epoch {epoch + 1}/{epochs}: "
                  f"mean recon mse {curve[-1]:.6f}")
    return shared, curve


def reconstruct(shared: SirenSharedWeights, mod: Modulation, grid_shape,
                modality: str = "image2d") -> Signal:
    """Dense evaluation on the grid; clamped for export, raw kept alongside."""
    coords = coordinate_grid(grid_shape)
    with dc.no_grad():
        pred = siren_forward(shared, mod.v, coords)
    raw = pred.data.reshape(grid_shape)
    if modality == "voxel3d":
        values = (raw > 0.5).astype(np.float64)
    else:
        values = np.clip(raw, 0.0, 1.0)
    return Signal(modality=modality, values=values, raw=raw)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    m = float(np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2))
    if m == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / m)
