"""
Services - optimizer, training history, training loop and evaluation
"""

from plumenet.services.optimizer import Adam, PlateauState, clip_grad_norm, global_grad_norm, plateau_scheduler
from plumenet.services.training_history import EpochRecord, TrainHistory
from plumenet.services.trainer_service import TrainResult, TrainerService, train
from plumenet.services.evaluation_service import EvaluationService, ScenePrediction, predict_patches

__all__ = [
    "Adam", "PlateauState", "clip_grad_norm", "global_grad_norm", "plateau_scheduler",
    "EpochRecord", "TrainHistory",
    "TrainResult", "TrainerService", "train",
    "EvaluationService", "ScenePrediction", "predict_patches",
]
