"""Toy decoder-only runtime: weights, sequences, prefill/decode and accounting."""
from .accounting import Accountant, count_flops, flop_breakdown, layer_flops, peak_activation_elems
from .config import ModelConfig
from .engine import DecodeResult, DecoderRuntime, KVCache, LayerState, PrefillResult, logits_digest
from .sequence import Segment, TokenSequence, assemble_sequence
from .weights import ModelWeights, generate_weights, load_model, save_model, sidecar_path

__all__ = [
    "Accountant", "count_flops", "flop_breakdown", "layer_flops", "peak_activation_elems",
    "ModelConfig", "DecodeResult", "DecoderRuntime", "KVCache", "LayerState", "PrefillResult",
    "logits_digest", "Segment", "TokenSequence", "assemble_sequence", "ModelWeights",
    "generate_weights", "load_model", "save_model", "sidecar_path",
]
