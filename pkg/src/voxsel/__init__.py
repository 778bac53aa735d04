"""Feature selection and neural classification for voice-based Parkinson's
disease detection."""

__version__ = "0.1.0"
