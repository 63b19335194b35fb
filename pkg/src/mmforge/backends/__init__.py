"""Stage contracts, the retrying gateway and the seeded mock backends."""

from .gateway import BackendEndpoint, Gateway, HttpTransport, call
from .mocks import MockBackend, hash_embedding, mock_suite
from .server import MockServer
from .types import (
    AudioRequest,
    AudioResponse,
    CaptionRequest,
    CaptionResponse,
    ConditioningMode,
    EmbedRequest,
    EmbedResponse,
    PropagateRequest,
    PropagateResponse,
    SegmentedObject,
    SegmentRequest,
    SegmentResponse,
    StageKind,
    VideoRequest,
    VideoResponse,
    VqaRequest,
    VqaResponse,
    canonical_json,
)

__all__ = [
    "AudioRequest", "AudioResponse", "BackendEndpoint", "CaptionRequest", "CaptionResponse",
    "ConditioningMode", "EmbedRequest", "EmbedResponse", "Gateway", "HttpTransport", "MockBackend",
    "MockServer", "PropagateRequest", "PropagateResponse", "SegmentRequest", "SegmentResponse", "SegmentedObject",
    "StageKind", "VideoRequest", "VideoResponse", "VqaRequest", "VqaResponse", "call", "canonical_json",
    "hash_embedding", "mock_suite",
]
