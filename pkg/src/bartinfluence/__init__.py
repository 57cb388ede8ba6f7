"""Bayesian regression trees with influence diagnostics and importance reweighting."""

from .data_model import (
    CSVParseError,
    CutpointGrid,
    Dataset,
    Hyperrectangle,
    ModelConfig,
    PosteriorDraw,
    PosteriorSample,
    SplitRule,
    Tree,
    TreeStructureError,
    cell,
    map_to_terminal,
    node_counts,
    path,
    predict_draw,
    read_csv,
    write_csv,
)
from .sampler import FitRefusedError, draw_mu, draw_sigma2, fit, split_probability

__version__ = "0.1.0"
