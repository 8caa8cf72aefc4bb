"""Tests package for fog-slicing-sim."""
