"""RGB-thermal salient object detection with dynamic fusion and prompt-driven refinement."""

__version__ = "0.1.0"
