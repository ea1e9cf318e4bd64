"""Sketch/shade/shadow synthesis toolkit: procedural CSG dataset generation,
hatching renderer, conditional adversarial models, metrics, and an inference
service."""

__version__ = "0.1.0"
