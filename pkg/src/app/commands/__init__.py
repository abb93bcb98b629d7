"""Experiment commands behind the ``selfpose`` CLI."""

from .context import CommandContext, load_context
from .evaluate import cmd_baseline_icp, cmd_eval
from .render_debug import cmd_render_debug
from .synth import cmd_synth
from .train import cmd_train_deform, cmd_train_reg

__all__ = [
    "CommandContext",
    "cmd_baseline_icp",
    "cmd_eval",
    "cmd_render_debug",
    "cmd_synth",
    "cmd_train_deform",
    "cmd_train_reg",
    "load_context",
]
