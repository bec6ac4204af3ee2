"""Bootstrap n-gram language models from machine-translation output:
post-editing, data selection, rescoring, filtering, interpolation and
evaluation, end to end."""

__version__ = "0.1.0"
