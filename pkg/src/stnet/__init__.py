"""Selective-tuning attention over sequential convolutional networks.

A bottom-up inference engine paired with a sparse top-down gating pass
that, given a class label, produces attention maps, bounding-box
proposals, and class-hypothesis visualizations.
"""

from stnet.attention import (
    DeadNodeError,
    PSField,
    SelectionConfig,
    TDDiedError,
    TDResult,
    ap_threshold,
    bridge_select,
    ps_activities,
    stage1_pwta,
    stage2_sc,
    stage2_si,
    stage3_propagate,
    td_pass,
)
from stnet.chviz import CHMap, ch_accumulate, gaussian_smooth
from stnet.localize import (
    AttentionMap,
    BBox,
    LocalizationError,
    attention_map,
    evaluate,
    iou,
    localize_image,
    map_to_input,
    propose_bbox,
    threshold_map,
)
from stnet.model_io import FormatError, load_network, load_weights, read_image, save_weights
from stnet.net import (
    ActivationTrace,
    LayerSpec,
    Network,
    NetworkError,
    network_forward,
)
from stnet.tensor import FeatureVolume, GatingVolume, GeometryError, RFGeometry, rf_geometry, rf_window

__version__ = "0.1.0"
