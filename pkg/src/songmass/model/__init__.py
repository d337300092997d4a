from songmass.model.attention import (
    DegenerateRowError,
    attention_regularizer,
    masked_attention,
    sentence_mask,
    target_map,
)
from songmass.model.losses import NumericError, backward, forward_loss, total_loss
from songmass.model.train import Bundle, Corpora, Schedule, Trainer, TrainingDiverged, build_model, train
from songmass.model.transformer import MODES, ModelConfig, SequenceTooLongError, SongMASS

__all__ = [
    "MODES",
    "Bundle",
    "Corpora",
    "DegenerateRowError",
    "ModelConfig",
    "NumericError",
    "Schedule",
    "SequenceTooLongError",
    "SongMASS",
    "Trainer",
    "TrainingDiverged",
    "attention_regularizer",
    "backward",
    "build_model",
    "forward_loss",
    "masked_attention",
    "sentence_mask",
    "target_map",
    "total_loss",
    "train",
]
