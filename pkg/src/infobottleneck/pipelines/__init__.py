from .base import LatentTarget, ReconstructionPipeline, compute_ceiling, make_pipeline, pipeline_ids
from .text import EncodingModelTextPipeline, NgramProposer
from .vision import PcaPriorVisionPipeline

__all__ = [
    "LatentTarget", "ReconstructionPipeline", "compute_ceiling", "make_pipeline", "pipeline_ids",
    "EncodingModelTextPipeline", "NgramProposer", "PcaPriorVisionPipeline",
]
