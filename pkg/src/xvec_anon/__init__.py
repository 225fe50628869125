"""x-vector pseudo-speaker anonymization and its privacy evaluation."""

from .anonymizer import (
    AnonymizationConfig,
    PseudoSpeakerResult,
    anonymize_dataset,
    anonymize_speaker,
    pseudo_speaker,
)
from .clustering import (
    ClusterAssignment,
    ClusteringParams,
    affinity_propagation,
    cluster_genders,
    cluster_pool,
    rank_clusters_by_size,
)
from .dataset import Dataset, SpeakerPool, build_speaker_pool, load_dataset, save_dataset
from .distance import DistanceMetric, cosine_distance, distance
from .evaluation import (
    AttackScenario,
    Trial,
    average_plda_distance,
    full_trials,
    run_scenario,
    score_trials,
    split_enroll_trial,
)
from .metrics import ScoreSet, cllr, min_cllr, rocch, rocch_eer
from .plda import PldaModel, TrainingOptions, plda_distance, plda_llr, train_plda
from .synthgen import PopulationSpec, generate_population

__version__ = "0.1.0"
