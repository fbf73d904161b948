"""Field-tuned exciton/trion polariton gate synthesis toolkit."""

__version__ = "0.1.0"
