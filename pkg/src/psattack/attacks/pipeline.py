"""The attacked pipeline: signal -> latent fit -> latent classifier.

Bundles everything an attack needs to query or differentiate the full
classification path, plus the loss maximized by every attack.
"""

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..inr import FitConfig, SirenSharedWeights, coordinate_grid, fit_latent, siren_forward
from ..models import ParamClassifier

__all__ = ["ParamPipeline", "label_distance"]


def label_distance(adv_logits: Tensor, clean_labels) -> tuple:
    """Per-sample cross-entropy of logits against the clean predictions.

    Attacks ascend this. Returns (scalar sum Tensor, per-sample (B,) Tensor).
    """
    from ..diffcore.functional import cross_entropy

    per = cross_entropy(adv_logits, clean_labels, reduction="none")
    return dc.tsum(per), per


@dataclass
class ParamPipeline:
    """Frozen shared weights + latent classifier + the fit recipe between them."""

    shared: SirenSharedWeights
    classifier: ParamClassifier
    fit_cfg: FitConfig
    grid_shape: tuple
    modality: str = "image2d"

    def __post_init__(self):
        self.grid_shape = tuple(self.grid_shape)
        self.coords = coordinate_grid(self.grid_shape)
        self._pixels = int(np.prod(self.grid_shape))

    def as_target(self, x) -> Tensor:
        """(B, *grid) array or Tensor -> (B, P, 1) fit target."""
        t = x if isinstance(x, Tensor) else dc.constant(np.asarray(x, np.float64))
        B = t.shape[0]
        return dc.reshape(t, (B, self._pixels, 1))

    def fit_clean(self, x_batch: np.ndarray):
        """Full-length unrecorded fit; returns (B, d) latents."""
        target = self.as_target(np.asarray(x_batch, np.float64))
        v, _ = fit_latent(self.shared, target, self.fit_cfg, coords=self.coords)
        return v.data

    def predict_full(self, x_batch: np.ndarray):
        """Clean-pipeline inference: labels and logits via the full fit."""
        v = self.fit_clean(x_batch)
        with dc.no_grad():
            logits = self.classifier.logits(v).data
        return np.argmax(logits, axis=-1), logits

    def loss_graph(self, adv: Tensor, clean_labels, n_steps=None, v0=None,
                   opt_state=None):
        """Recorded fit of ``adv`` then classifier loss; the unrolled path.

        Returns (loss sum Tensor, per-sample Tensor, v Tensor, opt_state).
        """
        cfg = self.fit_cfg if n_steps is None else FitConfig(
            n_steps=n_steps, lr=self.fit_cfg.lr, optimizer=self.fit_cfg.optimizer)
        target = self.as_target(adv)
        v, _, state = fit_latent(self.shared, target, cfg, coords=self.coords,
                                 v0=v0, record=True, opt_state=opt_state,
                                 return_state=True)
        logits = self.classifier.logits(v)
        loss, per = label_distance(logits, clean_labels)
        return loss, per, v, state
