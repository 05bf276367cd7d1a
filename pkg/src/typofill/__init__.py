"""typofill: predict missing binary typological features from language
metadata, phylogeny, and POS-tag n-gram evidence."""

__version__ = "0.1.0"
