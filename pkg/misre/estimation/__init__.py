from .pipeline import EstimationConfig, EstimationResult, Structure, run, strength

__all__ = ["EstimationConfig", "EstimationResult", "Structure", "run", "strength"]
