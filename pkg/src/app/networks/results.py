"""Result containers shared by the networks."""

from dataclasses import dataclass, field

import torch


@dataclass
class LossBreakdown:
    """Weighted total plus its unweighted terms."""

    total: torch.Tensor
    terms: dict[str, torch.Tensor] = field(default_factory=dict)

    def as_floats(self) -> dict[str, float]:
        values = {name: float(v.detach()) for name, v in self.terms.items()}
        values["total"] = float(self.total.detach())
        return values
