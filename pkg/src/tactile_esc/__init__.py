"""Extremum-seeking key insertion on simulated locks with a tactile strain tracker."""
from .bench import CampaignReport, TrialRecord, TrialSpec, run_random_campaign, run_trial
from .esc import EscConfig, ExtremumSeekingController, FirstOrderFilter, Pose6
from .lock_sim import LockModel, preset
from .objective import ObjectiveConfig
from .tracker import StrainTracker

__all__ = [
    "CampaignReport", "EscConfig", "ExtremumSeekingController", "FirstOrderFilter", "LockModel",
    "ObjectiveConfig", "Pose6", "StrainTracker", "TrialRecord", "TrialSpec", "preset",
    "run_random_campaign", "run_trial",
]
