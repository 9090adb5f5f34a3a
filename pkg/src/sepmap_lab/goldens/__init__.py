"""Frozen oracle tables."""
