"""Scene-anchored entropic optimal-transport fusion for traversability segmentation."""

from .config import ExperimentConfig
from .exceptions import (
    CapacityError,
    DataError,
    DegenerateTargetError,
    DegenerateVectorError,
    DomainError,
    NumericError,
    OTFuseError,
    ParameterError,
    ShapeError,
)
from .fusion import FusionResult, TraversabilityMask, fuse, fusion_weights, init_queries, predict_mask
from .geometry import depth_to_normal
from .losses import LossWeights, seg_loss, total_loss, vl_regularization
from .metrics import EvalReport, segmentation_metrics, split_evaluate
from .pipeline import TraversabilityPipeline
from .scene_anchor import (
    AttributeHeadClassifier,
    AttributeSpace,
    LinearHead,
    PrototypeTable,
    SceneAnchorGenerator,
    ScenePosterior,
    infer_scene_posterior,
    synthesize_anchor,
    train_heads,
)
from .tensor_core import cosine_distance, logsumexp, softmax_with_temperature, tensor_product_joint
from .transport import (
    AnchorTransport,
    SinkhornConfig,
    TransportPlan,
    barycentric_project,
    build_cost_matrix,
    exact_transport,
    sinkhorn,
)

__version__ = "0.1.0"
