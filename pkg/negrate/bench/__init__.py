"""Benchmark grids and table reproductions."""
