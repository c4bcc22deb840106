"""Anomaly detection on vehicle CAN telemetry with discrete hidden Markov models."""

from .codec import CanFrame, Channel, PidSample, decode_obd_pid, extract_channel_series, parse_log_line, read_log
from .detector import AnomalyAlert, Detector, DetectorConfig, calibrate_threshold, detect_stream, score_window
from .evaluation import AnomalyScenario, inject_anomaly, run_scenario_matrix
from .hmm import HmmModel, hmm_decode, hmm_estimate, hmm_generate, hmm_train, hmm_viterbi, load_model, save_model
from .observations import ObservationAlphabet, Quantizer, fit_quantizer, gradients, quantize, resample

__version__ = "0.1.0"

__all__ = [
    "AnomalyAlert", "AnomalyScenario", "CanFrame", "Channel", "Detector", "DetectorConfig", "HmmModel",
    "ObservationAlphabet", "PidSample", "Quantizer", "calibrate_threshold", "decode_obd_pid",
    "detect_stream", "extract_channel_series", "fit_quantizer", "gradients", "hmm_decode", "hmm_estimate",
    "hmm_generate", "hmm_train", "hmm_viterbi", "inject_anomaly", "load_model", "parse_log_line",
    "quantize", "read_log", "resample", "run_scenario_matrix", "save_model", "score_window",
]
