"""mmforge: synthetic multimodal video datasets from COCO-style images.

The package turns annotated images into training samples (future-plausible
captions, object counts, VQA pairs, generated videos and propagated mask
tracks) through pluggable generation backends, and scores downstream model
outputs with counting, VQA and segmentation metrics.
"""

__version__ = "0.1.0"

from .annotations import (
    CaptionRecord,
    PromptTemplate,
    VqaPair,
    VqaSet,
    build_caption_prompt,
    build_vqa_prompt,
    counts_to_qa,
    parse_vqa_response,
    render_vqa,
)
from .coco import CountLabel, DatasetIndex, ImageRecord, count_labels, parse_dataset, validate_dataset
from .config import PipelineConfig, load_config
from .evaluation import (
    EvalReport,
    Taxonomy,
    answer_to_node,
    embed_score,
    mae,
    mse,
    render_report,
    seg_report,
    wup,
)
from .masks import BinaryMask, MaskTrack, RleMask, iou, per_class_iou, rle_decode, rle_encode, track_diagnostics
from .orchestrator import RunReport, execute_run, plan_sample, stage_key
from .store import (
    DatasetManifest,
    ExportConfig,
    SampleManifest,
    SubsetSpec,
    export_training_set,
    read_dataset,
    split,
    subset,
    write_sample,
)

__all__ = [
    "BinaryMask", "CaptionRecord", "CountLabel", "DatasetIndex", "DatasetManifest", "EvalReport", "ExportConfig",
    "ImageRecord", "MaskTrack", "PipelineConfig", "PromptTemplate", "RleMask", "RunReport", "SampleManifest",
    "SubsetSpec", "Taxonomy", "VqaPair", "VqaSet", "answer_to_node", "build_caption_prompt", "build_vqa_prompt",
    "count_labels", "counts_to_qa", "embed_score", "execute_run", "export_training_set", "iou", "load_config",
    "mae", "mse", "parse_dataset", "parse_vqa_response", "per_class_iou", "plan_sample", "read_dataset",
    "render_report", "render_vqa", "rle_decode", "rle_encode", "seg_report", "split", "stage_key", "subset",
    "track_diagnostics", "validate_dataset", "wup", "write_sample",
]
