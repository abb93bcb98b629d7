"""Multi-head attention with an exact mode and a linear-complexity mode.

Linear mode pools the M key/value rows into ``projection_dim`` rows with a learned,
content-adaptive softmax over keys, then attends against the pooled rows. Cost grows
linearly in M.
"""

import math
from dataclasses import replace

import torch
import torch.nn as nn

from ..config.experiment import AttentionConfig
from ..errors import LevelMismatch, ShapeMismatch
from .encoder import FeaturePyramid


class MultiHeadAttention(nn.Module):
    def __init__(
        self,
        query_dim: int,
        key_dim: int,
        cfg: AttentionConfig,
        out_dim: int | None = None,
    ):
        super().__init__()
        self.cfg = cfg
        self.query_dim = query_dim
        self.key_dim = key_dim
        inner = cfg.heads * cfg.head_dim
        self.q_proj = nn.Linear(query_dim, inner)
        self.k_proj = nn.Linear(key_dim, inner)
        self.v_proj = nn.Linear(key_dim, inner)
        self.out_proj = nn.Linear(inner, out_dim or query_dim)
        nn.init.zeros_(self.v_proj.bias)
        nn.init.zeros_(self.out_proj.bias)
        if cfg.mode == "linear":
            self.pool = nn.Linear(key_dim, cfg.projection_dim)

    @property
    def out_dim(self) -> int:
        return self.out_proj.out_features

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        # (rows, H*d) -> (H, rows, d)
        return x.view(x.shape[0], self.cfg.heads, self.cfg.head_dim).transpose(0, 1)

    def forward(
        self,
        q_feats: torch.Tensor,
        k_feats: torch.Tensor,
        v_feats: torch.Tensor,
        return_weights: bool = False,
    ):
        if k_feats.shape[0] != v_feats.shape[0]:
            raise ShapeMismatch(
                f"keys ({k_feats.shape[0]} rows) and values ({v_feats.shape[0]} rows) differ"
            )
        if q_feats.shape[-1] != self.query_dim or k_feats.shape[-1] != self.key_dim:
            raise ShapeMismatch(
                f"feature widths {q_feats.shape[-1]}/{k_feats.shape[-1]} do not match "
                f"{self.query_dim}/{self.key_dim}"
            )
        if v_feats.shape[-1] != self.key_dim:
            raise ShapeMismatch(f"value width {v_feats.shape[-1]} does not match {self.key_dim}")

        q = self._split(self.q_proj(q_feats))
        k = self._split(self.k_proj(k_feats))
        v = self._split(self.v_proj(v_feats))

        if self.cfg.mode == "linear":
            # (M, p) weights, each column a distribution over keys
            e = torch.softmax(self.pool(k_feats), dim=0)
            k = e.T.unsqueeze(0) @ k
            v = e.T.unsqueeze(0) @ v

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.cfg.head_dim)
        weights = torch.softmax(scores, dim=-1)
        out = (weights @ v).transpose(0, 1).reshape(q_feats.shape[0], -1)
        out = self.out_proj(out)
        if return_weights:
            return out, weights
        return out


def attend(
    q_feats: torch.Tensor,
    k_feats: torch.Tensor,
    v_feats: torch.Tensor,
    module: MultiHeadAttention,
) -> torch.Tensor:
    """Retrieve from (k_feats, v_feats) for every row of q_feats.

    Raises:
        ShapeMismatch: On row-count or width mismatches.
    """
    return module(q_feats, k_feats, v_feats)


class AttentionBlock(nn.Module):
    """Residual attention followed by layer normalization."""

    def __init__(self, dim: int, cfg: AttentionConfig):
        super().__init__()
        self.attention = MultiHeadAttention(dim, dim, cfg)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        return self.norm(x + self.attention(x, context, context))


# =====================================================
# MULTI-SCALE ENHANCEMENT
# =====================================================


class CrossEnhancement(nn.Module):
    """Per-level cross attention: template features query scene features.

    Each level gets ``norm(x + attention(x, scene))``; ``concat`` fusion appends it to the
    encoder features, ``sum`` fusion replaces them with it.
    """

    def __init__(self, widths: list[int], cfg: AttentionConfig, fusion: str = "concat"):
        super().__init__()
        self.fusion = fusion
        self.widths = list(widths)
        self.attentions = nn.ModuleList(MultiHeadAttention(w, w, cfg) for w in widths)
        self.norms = nn.ModuleList(nn.LayerNorm(w) for w in widths)

    def out_widths(self) -> list[int]:
        if self.fusion == "concat":
            return [2 * w for w in self.widths]
        return list(self.widths)

    def forward(self, mesh: FeaturePyramid, scene: FeaturePyramid) -> FeaturePyramid:
        if mesh.num_levels != scene.num_levels or mesh.num_levels != len(self.attentions):
            raise LevelMismatch(
                f"pyramids have {mesh.num_levels} and {scene.num_levels} levels, "
                f"module expects {len(self.attentions)}"
            )
        levels = []
        for i, (m, s) in enumerate(zip(mesh.levels, scene.levels)):
            retrieved = self.attentions[i](m.features, s.features, s.features)
            enhanced = self.norms[i](m.features + retrieved)
            if self.fusion == "concat":
                fused = torch.cat([m.features, enhanced], dim=-1)
            else:
                fused = enhanced
            levels.append(replace(m, features=fused))
        return FeaturePyramid(levels, mesh.global_feature)


def cross_enhance(
    mesh_pyramid: FeaturePyramid,
    scene_pyramid: FeaturePyramid,
    module: CrossEnhancement,
) -> FeaturePyramid:
    """Enhance every template level with features retrieved from the matching scene level.

    Raises:
        LevelMismatch: If the pyramids differ in level count.
    """
    return module(mesh_pyramid, scene_pyramid)
