"""Procedural material node graphs: model, engine, transpiler and synthesis."""

__version__ = "0.1.0"
