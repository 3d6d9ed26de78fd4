"""Heralded photon subtraction from squeezed light: model, synthetic data, analysis."""
