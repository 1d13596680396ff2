"""Synthetic multi-view hand pose datasets: rigging, skinning, rendering, graph operators, metrics."""

__version__ = "0.1.0"

from .errors import (BehindCameraError, ConfigError, DegenerateReferenceError, DomainError, GenerationError,
                     MVHMError, ParseError, ReachabilityError, TriangulationError, ValidationError)
from .skeleton import Skeleton, forward_kinematics, rest_keypoints, rest_skeleton, sample_pose
from .spinmatch import SpinSolution, spin_match
from .handmesh import TemplateMesh, generate_template, skin
from .camera import CameraRig, Extrinsics, Intrinsics, build_ring, project, triangulate, unproject
from .render import Light, RenderOutput, extract_peak, rasterize, render_heatmaps
from .graphops import (ChebFilter, CoarseningHierarchy, GraphLaplacian, cheb_conv, cheb_conv_grad, coarsen,
                       gpool, gunpool, normalized_laplacian)
from .metrics import PoseErrorReport, auc, epe, evaluate_poses, pck
from .config import load_config
from .pipeline import check_dataset, evaluate, generate, triangulate_dataset
