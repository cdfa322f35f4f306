"""Expert-augmented Kaplan-Meier estimation for contaminated right-censored data."""

__version__ = "0.1.0"
