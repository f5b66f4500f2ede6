"""Relation classification over shortest dependency paths with multichannel LSTMs."""

from sdplstm.channels import EmbeddingTable, Vocab, build_vocab, dropout_embed, embed, load_pretrained
from sdplstm.deptree import DepSentence, SdpPath, SdpSample, entity_head, extract_sdp, parse_conll, to_channel_sequences
from sdplstm.evaluation import EvalReport, ablation_run, score
from sdplstm.labels import LABELS, OTHER
from sdplstm.model import HyperConfig, ModelParams, Prediction, backward, forward, init_params, objective
from sdplstm.training import TrainState, grad_check, train

__version__ = "0.1.0"

__all__ = [
    "LABELS",
    "OTHER",
    "DepSentence",
    "EmbeddingTable",
    "EvalReport",
    "HyperConfig",
    "ModelParams",
    "Prediction",
    "SdpPath",
    "SdpSample",
    "TrainState",
    "Vocab",
    "ablation_run",
    "backward",
    "build_vocab",
    "dropout_embed",
    "embed",
    "entity_head",
    "extract_sdp",
    "forward",
    "grad_check",
    "init_params",
    "load_pretrained",
    "objective",
    "parse_conll",
    "score",
    "to_channel_sequences",
    "train",
]
