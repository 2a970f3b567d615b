"""featloom: iterative feature generation for windowed multichannel biosignals."""

__version__ = "0.1.0"
