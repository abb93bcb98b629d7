"""Closed-form similarity fitting with a differentiable, gap-safeguarded SVD."""

from typing import Optional

import torch

from ..errors import DegenerateConfiguration
from ..geometry.types import SimilarityTransform

SINGULAR_GAP = 1e-6
RANK_TOL = 1e-10


class SafeSVD(torch.autograd.Function):
    """SVD of a square matrix whose backward zeroes terms with near-equal singular values."""

    @staticmethod
    def forward(ctx, a: torch.Tensor):
        u, s, vh = torch.linalg.svd(a)
        ctx.save_for_backward(u, s, vh)
        return u, s, vh

    @staticmethod
    def backward(ctx, grad_u, grad_s, grad_vh):
        u, s, vh = ctx.saved_tensors
        v = vh.transpose(-2, -1)
        grad_v = grad_vh.transpose(-2, -1) if grad_vh is not None else torch.zeros_like(v)
        grad_u = grad_u if grad_u is not None else torch.zeros_like(u)
        grad_s = grad_s if grad_s is not None else torch.zeros_like(s)

        s2 = s * s
        gap = s2.unsqueeze(0) - s2.unsqueeze(1)  # gap[i, j] = s_j² - s_i²
        f = torch.where(gap.abs() < SINGULAR_GAP, torch.zeros_like(gap), 1.0 / gap)
        f.fill_diagonal_(0.0)

        smat = torch.diag(s)
        ut_gu = u.T @ grad_u
        vt_gv = v.T @ grad_v
        inner = (
            (f * (ut_gu - ut_gu.T)) @ smat
            + torch.diag(grad_s)
            + smat @ (f * (vt_gv - vt_gv.T))
        )
        return u @ inner @ vh


def umeyama_fit(
    p: torch.Tensor,
    q: torch.Tensor,
    weights: Optional[torch.Tensor] = None,
) -> tuple[SimilarityTransform, torch.Tensor]:
    """Least-squares similarity transform with q ≈ s·R·p + T.

    Computed in float64. With ``weights`` every pair's squared error is weighted; the
    returned residual is always the unweighted sum Σ||q_i - (s·R·p_i + T)||².

    Args:
        p: Source points (K, 3).
        q: Target points (K, 3).
        weights: Optional nonnegative per-pair weights (K,).

    Returns:
        Tuple of (transform, residual). Both are differentiable w.r.t. p, q and weights.

    Raises:
        DegenerateConfiguration: Fewer than 3 pairs, or collinear / coincident source points.
    """
    if p.shape[0] < 3 or p.shape != q.shape:
        raise DegenerateConfiguration(f"need at least 3 matched pairs, got {p.shape[0]}")
    p64 = p.double()
    q64 = q.double()
    if weights is None:
        w = torch.full((p64.shape[0],), 1.0 / p64.shape[0], dtype=torch.float64, device=p.device)
    else:
        w = weights.double()
        total = w.sum()
        if float(total.detach()) <= 0.0:
            raise DegenerateConfiguration("all pair weights are zero")
        w = w / total

    mu_p = (w.unsqueeze(1) * p64).sum(dim=0)
    mu_q = (w.unsqueeze(1) * q64).sum(dim=0)
    pc = p64 - mu_p
    qc = q64 - mu_q

    source_cov = (w.unsqueeze(1) * pc).T @ pc
    spread = torch.linalg.svdvals(source_cov.detach())
    if float(spread[0]) <= RANK_TOL or float(spread[1]) <= RANK_TOL * float(spread[0]):
        raise DegenerateConfiguration("source points are collinear or coincident")

    var_p = torch.trace(source_cov)
    cov = (w.unsqueeze(1) * qc).T @ pc
    u, s, vh = SafeSVD.apply(cov)

    sign = torch.ones(3, dtype=torch.float64, device=p.device)
    if float(torch.linalg.det(u.detach()) * torch.linalg.det(vh.detach())) < 0:
        sign[-1] = -1.0
    rotation = u @ torch.diag(sign) @ vh
    scale = (s * sign).sum() / var_p
    if float(scale.detach()) <= 0.0:
        raise DegenerateConfiguration("fitted scale is not positive")
    translation = mu_q - scale * rotation @ mu_p

    transform = SimilarityTransform(scale, rotation, translation)
    residual = (q64 - transform.apply_points(p64)).pow(2).sum()
    return transform, residual
