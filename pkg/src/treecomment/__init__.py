"""Code-to-comment generation over token-type trees.

A numpy library implementing the full pipeline: parsing SQL / lambda-calculus
into typed trees, a type-indexed N-ary Tree-LSTM encoder, a two-stage
copy-or-generate decoder with grammar masking and copy decay, likelihood and
policy-gradient training, and BLEU/ROUGE evaluation.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, finite_difference_check, no_grad
from .corpus import (Example, Vocab, batch_iter, build_vocab, generate_synthetic,
                     lint_examples, load_corpus_jsonl, tokenize_comment)
from .decoder import DecoderConfig, Trajectory, TreeDecoder, decay_update
from .encoder import EncoderConfig, EncoderOutput, TreeEncoder
from .metrics import MetricScore, bleu4, corpus_eval, rouge2, rougeL
from .params import AdamState, ParamStore, adam_step, load_checkpoint, save_checkpoint, xavier_init
from .parsers import ParseError, parse_lambda, parse_sql
from .trees import (Grammar, Node, TokenTypeTree, TreeStats, get_grammar,
                    tree_from_json, tree_stats, tree_to_json)
from .training import (Baseline, TrainConfig, TrainResult, hrl_loss, mixed_loss,
                       mle_loss, mle_weight, shaped_rewards, train)

__all__ = [
    "Tensor", "finite_difference_check", "no_grad",
    "Example", "Vocab", "batch_iter", "build_vocab", "generate_synthetic",
    "lint_examples", "load_corpus_jsonl", "tokenize_comment",
    "DecoderConfig", "Trajectory", "TreeDecoder", "decay_update",
    "EncoderConfig", "EncoderOutput", "TreeEncoder",
    "MetricScore", "bleu4", "corpus_eval", "rouge2", "rougeL",
    "AdamState", "ParamStore", "adam_step", "load_checkpoint", "save_checkpoint",
    "xavier_init",
    "ParseError", "parse_lambda", "parse_sql",
    "Grammar", "Node", "TokenTypeTree", "TreeStats", "get_grammar",
    "tree_from_json", "tree_stats", "tree_to_json",
    "Baseline", "TrainConfig", "TrainResult", "hrl_loss", "mixed_loss",
    "mle_loss", "mle_weight", "shaped_rewards", "train",
]
