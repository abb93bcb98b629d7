"""Helpers shared by the two training stages."""

import random
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import structlog  # noqa: E402
import torch  # noqa: E402

from ..errors import IoFailure  # noqa: E402

logger = structlog.get_logger()


def seed_everything(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def resolve_device(name: str) -> torch.device:
    """The requested device, or the CPU when CUDA is requested but unavailable."""
    if name == "cuda" and not torch.cuda.is_available():
        logger.warning("CUDA requested but not available, falling back to CPU")
        return torch.device("cpu")
    return torch.device(name)


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> Iterator[list[int]]:
    """Shuffled index batches; the order depends only on (seed, epoch)."""
    generator = torch.Generator().manual_seed(seed * 100_003 + epoch)
    order = torch.randperm(n, generator=generator).tolist()
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


@dataclass
class TrainingHistory:
    """Per-epoch mean loss terms (``total`` plus each named term)."""

    epochs: list[dict[str, float]] = field(default_factory=list)

    def append(self, epoch: int, terms: list[dict[str, float]], lr: float) -> dict[str, float]:
        names = sorted({k for t in terms for k in t})
        summary = {k: float(np.mean([t[k] for t in terms if k in t])) for k in names}
        summary.update(epoch=float(epoch), lr=lr, frames=float(len(terms)))
        self.epochs.append(summary)
        return summary

    def totals(self) -> list[float]:
        return [e["total"] for e in self.epochs if "total" in e]


def plot_loss_curve(history: TrainingHistory, path: Path, title: str) -> Path:
    """Plot every loss term against the epoch index (log scale)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [int(e["epoch"]) for e in history.epochs]
    skip = {"epoch", "lr", "frames"}
    names = sorted({k for e in history.epochs for k in e} - skip)
    for name in names:
        ax.plot(epochs, [e.get(name, np.nan) for e in history.epochs], label=name)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.set_title(title)
    if history.epochs and all(e.get("total", 0.0) > 0 for e in history.epochs):
        ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=100)
    except OSError as e:
        raise IoFailure(f"Cannot write loss curve ({e})", path=str(path)) from e
    finally:
        plt.close(fig)
    logger.debug("Loss curve written", path=str(path))
    return Path(path)
