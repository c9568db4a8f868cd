"""vectraj: target-driven vehicle trajectory prediction on vectorized
polyline scenes, with a self-contained autodiff core, synthetic scenario
generation, and the standard motion-forecasting metric suite."""

__version__ = "0.1.0"
