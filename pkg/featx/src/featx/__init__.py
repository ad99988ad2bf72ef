"""featx: turn a directory of images into corpus feature/posterior matrices."""

__version__ = "0.1.0"
