"""tagsight: discover visually recognizable hashtags in weakly-labeled photo corpora."""

__version__ = "0.1.0"
