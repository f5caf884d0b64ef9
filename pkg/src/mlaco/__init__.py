"""Solution prediction for ant colony optimization on the orienteering problem."""
from .aco import AcoConfig, PheromoneState, RunTrace, init_model, preset, run, two_opt_improve
from .classifier import LinearModel, Prediction, evaluate, predict, train
from .exact import ExactResult, brute_force, solve_bnb
from .features import EdgeFeatureMatrix, assemble, extract
from .instance import Instance, Route, feasible, generate_random, make_route, parse, write_json
from .sampler import SampleSet, sample
from .stats import normalize_curves, optimality_gap, wilcoxon_signed_rank

__version__ = "0.1.0"
