"""Speckle-based X-ray phase-contrast imaging toolkit.

Simulates coded-mask speckle references with exact ground truth, recovers
displacement/transmission with windowed-correlation and cost-volume
trackers, and integrates differential phase for quantitative metrology.
"""

from .costvol import (
    CostVolume,
    FeatureStack,
    argmax_displacement,
    build_cost_volume,
    inverse_warp_features,
    multiscale_costvol_track,
    pool_cost_volume,
    warp_features,
)
from .dataset import generate_dataset, load_manifest, pair_seeds, verify_dataset
from .dic import (
    MatchResult,
    TrackConfig,
    dic_track_full,
    dic_track_pyramid,
    subpixel_refine,
    transmission_recover,
    zncc_match,
)
from .errors import (
    GridFormatError,
    GridHeaderError,
    GridMagicError,
    GridPayloadError,
    ParameterError,
    SpeckleKitError,
    VerificationError,
)
from .grid import (
    ComplexField2D,
    Image2D,
    PyramidStack,
    SeedContext,
    VectorField2D,
    bilinear_map,
    bilinear_sample,
    downsample_by_2,
    finite_gradient,
    gaussian_blur,
)
from .gridio import GridHeader, file_digest, read_grid, read_image, write_grid, write_image
from .optics import (
    CodedMask,
    OpticsConfig,
    fresnel_propagate,
    generate_coded_mask,
    render_reference,
)
from .phase import (
    GeometryConfig,
    LensFit,
    MetricsReport,
    classify_error_regime,
    displacement_to_gradient,
    fit_paraboloid,
    gradient_curl_rms,
    integrate_gradients,
    relative_l2_loss,
)
from .synth import (
    SampleTruth,
    SynthConfig,
    displacement_from_phase,
    gen_phase_map,
    gen_shape_mask,
    gen_transmission_map,
    make_pair,
    make_truth,
    warp_apply,
)

__version__ = "0.1.0"
