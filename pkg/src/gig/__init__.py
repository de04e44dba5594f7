"""Rule-guided imputation of missing attribute values in property graphs."""
__version__ = "0.1.0"
