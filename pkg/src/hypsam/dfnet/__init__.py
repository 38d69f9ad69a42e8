"""Dynamic fusion network for RGB-T saliency."""
from .model import DFNet, PredictionSet, build_model, load_checkpoint, save_checkpoint

__all__ = ["DFNet", "PredictionSet", "build_model", "load_checkpoint", "save_checkpoint"]
