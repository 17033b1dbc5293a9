"""
Commands package - Exports every subcommand registrar

Each module adds its subparsers and binds a ``handler(args) -> int``.
"""
from .synth_commands import register as register_synth
from .spectral_commands import register as register_spectral
from .model_commands import register as register_model
from .ablation_commands import register as register_ablation

__all__ = [
    'register_synth',
    'register_spectral',
    'register_model',
    'register_ablation',
]
