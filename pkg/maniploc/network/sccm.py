"""
Spatio-channel correlation module.

The feature X (N×C×H×W) is folded into X' (N × HW/r² × Cr²) so the spatial
correlation matrix stays at (HW/r²)² entries. Three linear embeddings
g, theta, phi of X' feed a spatial attention softmax(X'_theta X'_phi^T) X'_g
and a channel attention X'_g softmax(X'_theta^T X'_phi); both results are
unfolded, projected by 1×1 convolutions and added to X with learnable
weights. A Conv-ReLU-Conv-Sigmoid head turns the fused feature into a
single-channel mask.
"""

from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from maniploc.exceptions import NumericError, ShapeError
from maniploc.models.configs import SccmConfig
from maniploc.models.structures import SccmState


def _ensure_batched(x: torch.Tensor, expected_dim: int, stage: str) -> Tuple[torch.Tensor, bool]:
    if x.dim() == expected_dim - 1:
        return x.unsqueeze(0), True
    if x.dim() != expected_dim:
        raise ShapeError(f"expected a {expected_dim}-D tensor, got shape {tuple(x.shape)}", stage)
    return x, False


def fold(x: torch.Tensor, r: int) -> torch.Tensor:
    """
    Space-to-depth reshape h: (N×)C×H×W -> (N×)(HW/r²)×(Cr²).

    Rows enumerate the (H/r)×(W/r) grid of r×r blocks in row-major order;
    columns enumerate (channel, in-block row, in-block column).

    Raises:
        ShapeError: If H or W is not divisible by r
    """
    x, squeezed = _ensure_batched(x, 4, "fold")
    n, c, h, w = x.shape
    if r <= 0 or h % r or w % r:
        raise ShapeError(f"feature {h}x{w} not divisible by fold ratio r={r}", "fold")
    folded = F.pixel_unshuffle(x, r).flatten(2).transpose(1, 2)
    return folded[0] if squeezed else folded


def unfold(m: torch.Tensor, r: int, h: int, w: int, c: int) -> torch.Tensor:
    """
    Inverse of :func:`fold`: (N×)(HW/r²)×(Cr²) -> (N×)C×H×W.

    Raises:
        ShapeError: If the matrix does not match (h, w, c, r)
    """
    m, squeezed = _ensure_batched(m, 3, "unfold")
    n, rows, cols = m.shape
    if r <= 0 or h % r or w % r or rows != (h // r) * (w // r) or cols != c * r * r:
        raise ShapeError(
            f"matrix {rows}x{cols} inconsistent with H={h}, W={w}, C={c}, r={r}", "unfold"
        )
    x = F.pixel_shuffle(m.transpose(1, 2).reshape(n, cols, h // r, w // r), r)
    return x[0] if squeezed else x


def _check_same_shape(stage: str, *mats: torch.Tensor) -> None:
    shapes = {tuple(m.shape) for m in mats}
    if len(shapes) != 1:
        raise ShapeError(f"embeddings must share one shape, got {sorted(shapes)}", stage)


def spatial_correlation(xt: torch.Tensor, xp: torch.Tensor) -> torch.Tensor:
    """A_s = row-softmax(X'_theta X'_phi^T), shape (N×)M×M."""
    _check_same_shape("spatial_attention", xt, xp)
    # torch.softmax subtracts the row maximum internally
    return torch.softmax(xt @ xp.transpose(-1, -2), dim=-1)


def channel_correlation(xt: torch.Tensor, xp: torch.Tensor) -> torch.Tensor:
    """A_c = row-softmax(X'_theta^T X'_phi), shape (N×)K×K."""
    _check_same_shape("channel_attention", xt, xp)
    return torch.softmax(xt.transpose(-1, -2) @ xp, dim=-1)


def spatial_attention(xg: torch.Tensor, xt: torch.Tensor, xp: torch.Tensor) -> torch.Tensor:
    """
    Y'_s = softmax(X'_theta X'_phi^T) X'_g.

    Args:
        xg, xt, xp: Matrices of identical shape (N×)M×K

    Returns:
        torch.Tensor: (N×)M×K
    """
    _check_same_shape("spatial_attention", xg, xt, xp)
    return spatial_correlation(xt, xp) @ xg


def channel_attention(xg: torch.Tensor, xt: torch.Tensor, xp: torch.Tensor) -> torch.Tensor:
    """
    Y'_c = X'_g softmax(X'_theta^T X'_phi).

    Args:
        xg, xt, xp: Matrices of identical shape (N×)M×K

    Returns:
        torch.Tensor: (N×)M×K
    """
    _check_same_shape("channel_attention", xg, xt, xp)
    return xg @ channel_correlation(xt, xp)


class SpatioChannelCorrelation(nn.Module):
    """
    One scale's correlation module f_n.

    Embeddings g, theta, phi are per-row linear maps on the folded matrix,
    i.e. 1×1 convolutions on the (H/r)×(W/r) grid with Cr² channels.
    With ``feature_sharing`` off, the channel attention gets its own
    theta/phi pair.
    """

    def __init__(self, cfg: SccmConfig, check_finite: bool = True):
        super().__init__()
        self.cfg = cfg
        self.ratio = cfg.ratio
        self.check_finite = check_finite

        folded_in = cfg.channels * cfg.ratio ** 2
        folded_embed = cfg.embed * cfg.ratio ** 2
        attends = cfg.spatial or cfg.channel

        self.g = nn.Linear(folded_in, folded_embed) if attends else None
        self.theta = nn.Linear(folded_in, folded_embed) if attends else None
        self.phi = nn.Linear(folded_in, folded_embed) if attends else None
        separate = attends and cfg.channel and cfg.spatial and not cfg.feature_sharing
        self.theta_c = nn.Linear(folded_in, folded_embed) if separate else None
        self.phi_c = nn.Linear(folded_in, folded_embed) if separate else None

        self.omega_s = nn.Conv2d(cfg.embed, cfg.channels, kernel_size=1) if cfg.spatial else None
        self.omega_c = nn.Conv2d(cfg.embed, cfg.channels, kernel_size=1) if cfg.channel else None
        self.alpha_s = nn.Parameter(torch.ones(1))
        self.alpha_c = nn.Parameter(torch.ones(1))

        self.mask_head = nn.Sequential(
            nn.Conv2d(cfg.channels, cfg.mask_hidden, kernel_size=3, padding=1),
            nn.ReLU(inplace=False),
            nn.Conv2d(cfg.mask_hidden, 1, kernel_size=3, padding=1),
        )

    def _finite(self, tensor: Optional[torch.Tensor], stage: str) -> None:
        if self.check_finite and tensor is not None and not torch.isfinite(tensor).all():
            raise NumericError(f"sccm.{stage}")

    def forward(
        self,
        x: torch.Tensor,
        return_state: bool = False,
    ) -> Tuple[torch.Tensor, torch.Tensor, Optional[SccmState]]:
        """
        Compute Z = X + a_s w_s(Y_s) + a_c w_c(Y_c) and the mask.

        Args:
            x: N×C×H×W feature, H and W divisible by the fold ratio
            return_state: Also return the attention intermediates

        Returns:
            (z, mask, state): z is N×C×H×W, mask is N×1×H×W in (0, 1)
        """
        n, c, h, w = x.shape
        if c != self.cfg.channels:
            raise ShapeError(f"expected {self.cfg.channels} channels, got {c}", "sccm")
        r = self.ratio
        embed = self.cfg.embed

        x_fold = fold(x, r)
        z = x
        xg = xt = xp = None
        a_s = a_c = ys = yc = None

        if self.g is not None:
            xg, xt, xp = self.g(x_fold), self.theta(x_fold), self.phi(x_fold)
            self._finite(xg, "embedding")

        if self.cfg.spatial:
            a_s = spatial_correlation(xt, xp)
            ys = unfold(a_s @ xg, r, h, w, embed)
            self._finite(ys, "spatial_attention")
            z = z + self.alpha_s * self.omega_s(ys)

        if self.cfg.channel:
            if self.theta_c is not None:
                a_c = channel_correlation(self.theta_c(x_fold), self.phi_c(x_fold))
            else:
                a_c = channel_correlation(xt, xp)
            yc = unfold(xg @ a_c, r, h, w, embed)
            self._finite(yc, "channel_attention")
            z = z + self.alpha_c * self.omega_c(yc)

        self._finite(z, "fusion")
        mask = torch.sigmoid(self.mask_head(z))
        self._finite(mask, "mask_head")

        state = None
        if return_state:
            state = SccmState(
                x=x, x_fold=x_fold, xg=xg, xt=xt, xp=xp, a_s=a_s, a_c=a_c,
                ys=ys, yc=yc, alpha_s=self.alpha_s, alpha_c=self.alpha_c, z=z, ratio=r,
            )
        return z, mask, state
