"""BICM-ID with 16-QAM: demapper tables, MAP decoder curve, EXIT chart and thresholds."""

from .chart import (ExitChart, RateLoss, Thresholds, bicm_system, build_exit_chart, rate_loss,
                    snr_area, snr_potential, snr_thresholds, write_chart_csv)
from .decoder import (RegularEnsemble, SmoothDecoderCurve, decoder_inverse, decoder_map_exit,
                      eps_bp_bisection, eps_map_maxwell, smooth_g)
from .model import (PRESETS, BicmModel, cm_capacity, demod_exit, demod_exit_mc, f0,
                    preset_points, read_mapping, snr_for_capacity, write_mapping)
