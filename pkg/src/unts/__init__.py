"""Unsupervised neural text simplification on a small numpy autodiff engine."""

from .evaluation import EvalInstance, EvalReport, bleu, evaluate, fe_diff, sari, word_diff
from .inference import merge_repeats, postprocess, replace_oov, simplify, simplify_sentences
from .model import ModelConfig, ModelState, load_checkpoint, save_checkpoint
from .synthetic import SynthConfig, generate_synthetic_corpus
from .text import Corpus, Vocabulary, flesch_ease, partition_corpus, tokenize
from .training import Trainer, TrainingConfig, ablate, train_semisupervised, train_unsupervised

__version__ = "0.1.0"
