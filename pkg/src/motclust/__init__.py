"""Foreground motion clustering for object discovery in videos.

Links pixels across frames via forward/backward flow consistency, accumulates
trajectory embeddings with a pixel-trajectory recurrence, clusters them on the
unit sphere with von Mises-Fisher mean shift, and evaluates multi-object
segmentations.
"""

from .backend import backend_name
from .cluster import VMFConfig, cluster_embeddings, hungarian, match_windows, vmf_mean_shift
from .embedding import (
    LossConfig,
    cosine_distance,
    loss_gradients,
    loss_total,
    spherical_mean,
    sphere_optimize,
)
from .metrics import delta_obj, foreground_iou, multi_object_prf
from .pipeline import PipelineConfig, run_eval, run_segment
from .ptrnn import PTRNNParams, init_ptrnn_params, run_ptrnn
from .synth import SceneSpec, generate_scene, oracle_embeddings
from .trajectory import FlowPair, enumerate_trajectories, flow_consistent, link_mask, warp_g
from .ynet import YNetParams, foreground_predict, init_ynet_params, ynet_forward

__all__ = [
    "FlowPair",
    "LossConfig",
    "PTRNNParams",
    "PipelineConfig",
    "SceneSpec",
    "VMFConfig",
    "YNetParams",
    "backend_name",
    "cluster_embeddings",
    "cosine_distance",
    "delta_obj",
    "enumerate_trajectories",
    "flow_consistent",
    "foreground_iou",
    "foreground_predict",
    "generate_scene",
    "hungarian",
    "init_ptrnn_params",
    "init_ynet_params",
    "link_mask",
    "loss_gradients",
    "loss_total",
    "match_windows",
    "multi_object_prf",
    "oracle_embeddings",
    "run_eval",
    "run_ptrnn",
    "run_segment",
    "spherical_mean",
    "sphere_optimize",
    "vmf_mean_shift",
    "warp_g",
    "ynet_forward",
]

__version__ = "0.1.0"
