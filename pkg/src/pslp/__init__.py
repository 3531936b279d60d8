"""Prototype-based soft-label propagation for transductive few-shot classification."""

from .episodes import Episode, sample_balanced_episode, sample_dirichlet_episode, synthetic_gaussian_bank
from .evaluate import BenchReport, EpisodeParams, bench_latency, evaluate
from .features import FeatureBank, PreprocessPipeline, apply_pipeline, load_feature_bank, pca_reduce, save_feature_bank
from .graph import QSGraph, build_graph
from .jmp import JmpConfig, jmp_refine
from .model import EpisodeResult, PslpConfig, Prototypes, pslp_infer
from .propagation import LabelMatrix, PropagationMatrix, propagation_matrix

__version__ = "0.1.0"
