"""License plate recognition from visual rhythm images, one frame per vehicle."""

__version__ = "0.1.0"

from .association import associate_vehicle, mark_to_frame_index, own_mark
from .detection import BBox, DetectorConfig, Mark, builtin_blob_detect, detect
from .evaluate import GroundTruthEntry, compute_cer, edit_distance, match_records
from .ocr import BUILTIN_FONT, GlyphFont, crop_plate, render_plate_glyphs, template_ocr, validate_plate_format
from .pipeline import PipelineConfig, load_config, run_pipeline
from .records import PlateRecord
from .rhythm import ChunkSpec, LineSpec, VRImage, build_vr_chunk, iter_vr_chunks, sample_line
from .synth import SceneSpec, VehicleSpec, generate_scene, random_scene
from .video_io import Frame, FrameSourceConfig, decode_netpbm, encode_netpbm, open_frame_source

__all__ = [
    "associate_vehicle", "mark_to_frame_index", "own_mark",
    "BBox", "DetectorConfig", "Mark", "builtin_blob_detect", "detect",
    "GroundTruthEntry", "compute_cer", "edit_distance", "match_records",
    "BUILTIN_FONT", "GlyphFont", "crop_plate", "render_plate_glyphs", "template_ocr",
    "validate_plate_format",
    "PipelineConfig", "load_config", "run_pipeline",
    "PlateRecord",
    "ChunkSpec", "LineSpec", "VRImage", "build_vr_chunk", "iter_vr_chunks", "sample_line",
    "SceneSpec", "VehicleSpec", "generate_scene", "random_scene",
    "Frame", "FrameSourceConfig", "decode_netpbm", "encode_netpbm", "open_frame_source",
]
