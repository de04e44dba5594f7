"""Sequence model: vocabulary, encoder-decoder network, checkpoints."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint, write_training_log
from .transformer import (Checkpoint, ModelParams, Prediction, Transformer, TrainingError,
                          grad_check, init_weights, kl_loss, predict_topk, train)
from .vocab import (BOS, EOS, PAD, SEP, UNK, TrainingPair, Vocabulary, build_vocab,
                    encode_lhs, encode_rhs, make_training_pairs, parse_literals)

__all__ = [
    "BOS", "EOS", "PAD", "SEP", "UNK", "Checkpoint", "CheckpointError", "ModelParams",
    "Prediction", "TrainingError", "TrainingPair", "Transformer", "Vocabulary", "build_vocab",
    "encode_lhs", "encode_rhs", "grad_check", "init_weights", "kl_loss", "load_checkpoint",
    "make_training_pairs", "parse_literals", "predict_topk", "save_checkpoint", "train",
    "write_training_log",
]
