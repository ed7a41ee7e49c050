"""Handcrafted-descriptor SVM ensembles with z-normalised sum-rule score fusion."""

__version__ = "0.1.0"
