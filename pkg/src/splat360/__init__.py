"""Cylindrical-triplane panoramic 3D Gaussian splatting toolkit.

Geometry, a deterministic CPU equirectangular rasterizer (with a cubemap
oracle), cylindrical triplane fields with attention-based refinement,
visibility-weighted RGB retrieval, panoramic quality metrics, and a
coordinate-system benchmark, all exercisable at desk scale without any
trained weights.
"""

from .geometry import (ImageDims, Pose, cart_to_cyl, cart_to_sph, cyl_jacobian,
                       cyl_to_cart, equirect_jacobian, equirect_project,
                       equirect_unproject, sph_jacobian, sph_to_cart,
                       transform_scale)
from .gaussians import Gaussian, GaussianCloud, concat, covariance, depth_prune
from .panorama import Panorama
from .ply import ply_read, ply_write
from .rasterizer import RenderOptions, render_cubemap, render_equirect, composite_loss
from .retrieval import SourceView, colorize_cloud, retrieve_color, visibility_score
from .triplane import (AttentionParams, DecoderParams, FeaturePoints,
                       TriplaneConfig, TriplaneGrid, cell_center, cell_of,
                       cross_plane_attention, decode_gaussians, init_from_points,
                       query_feature, storage_cells, triplane_to_image_attention)
from .metrics import (MetricReport, depth_metrics, lrce, pcc, pooled_pcc, psnr,
                      ssim, ws_psnr)
from .scene import SceneSpec, SyntheticScene, gen_scene
from .config import RunConfig

__version__ = "0.1.0"
