"""Unit tests for the feature importance toolkit."""
