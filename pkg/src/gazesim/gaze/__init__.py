from gazesim.gaze.config import DEFAULT_CONFIG, GazeConfig, hashed_pc, region_and_offset
from gazesim.gaze.prefetcher import GazePrefetcher, Prediction, PredictionKind
from gazesim.gaze.storage import storage_report
from gazesim.gaze.tables import AtEntry, DenseCounter, PrefetchBuffer, PrefetchState

__all__ = [
    "AtEntry",
    "DEFAULT_CONFIG",
    "DenseCounter",
    "GazeConfig",
    "GazePrefetcher",
    "Prediction",
    "PredictionKind",
    "PrefetchBuffer",
    "PrefetchState",
    "hashed_pc",
    "region_and_offset",
    "storage_report",
]
