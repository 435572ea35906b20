from .registry import FeatureTaps, build_model, model_entry, model_names, resolve_tap

__all__ = ["build_model", "model_entry", "model_names", "resolve_tap", "FeatureTaps"]
