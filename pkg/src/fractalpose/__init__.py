"""fractalpose: head pose estimation from fractal block-coding signatures.

Images are encoded with a partitioned-iterated-function-system style block
codec; the resulting transform parameters, flattened to a fixed-length
symbol vector, act as a pose signature that is matched against a labeled
gallery by Hamming distance.
"""

from .codec import (
    EncodeStats,
    EncoderConfig,
    FractalCode,
    FractalCodeEntry,
    block_distortion,
    decode,
    dequantize_o,
    dequantize_s,
    encode,
    encode_with_stats,
    fit_contrast_offset,
    load_code,
    quantize_o,
    quantize_s,
    save_code,
)
from .evaluate import (
    EvalReport,
    Prediction,
    ProtocolResult,
    build_report,
    cumulative_curve,
    error_by_angle,
    mae,
    run_protocol,
)
from .gallery import (
    EmptyGalleryError,
    Gallery,
    GalleryBuildError,
    GalleryEntry,
    Manifest,
    ManifestRow,
    PoseLabel,
    build_gallery,
    encode_image_to_vector,
    load_gallery,
    load_manifest,
    query,
    save_gallery,
    save_manifest,
    split_leave_one_subject_out,
    split_random,
)
from .image import (
    Block,
    FormatError,
    GrayImage,
    Isometry,
    apply_isometry,
    compose,
    downsample_2x,
    extract_domain_blocks,
    extract_range_blocks,
    inverse,
    psnr,
    read_pgm,
    resize,
    resize_to_256,
    write_pgm,
)
from .kernels import BACKEND, HAVE_NUMBA, available_backends, set_threads
from .vectors import CodeVector, IncomparableCodesError, hamming, vectorize

__version__ = "0.1.0"
