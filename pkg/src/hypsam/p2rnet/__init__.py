"""Training-free refinement of coarse saliency maps with a frozen promptable segmenter."""
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .prompts import HybridPrompt, binarize, build_prompts, extract_boxes
from .refine import RefineStrategy, refine
from .segmenter import SamBackend, StubBackend, build_backend, checksum, segment
from .selector import QualityScores, SelectorConfig, quality_score, select_modality

__all__ = [
    "PipelineConfig", "PipelineResult", "run_pipeline", "HybridPrompt", "binarize", "build_prompts",
    "extract_boxes", "RefineStrategy", "refine", "SamBackend", "StubBackend", "build_backend", "checksum",
    "segment", "QualityScores", "SelectorConfig", "quality_score", "select_modality",
]
