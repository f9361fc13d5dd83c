"""Motion retargeting toolkit: per-character motion tokenizers bridged by a
condition-guided flow model, with synthetic characters, metrics, and a CLI."""

__version__ = "0.1.0"
