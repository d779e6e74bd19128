"""Separation of magnetic-susceptibility and chemical shift/exchange
contributions to the MRI resonance frequency shift.

The toolkit simulates frequency-shift maps of labeled phantoms for
arbitrary B0 orientations, separates the susceptibility-induced and
chemical-shift/exchange-induced components from multi-orientation data,
and reconstructs susceptibility maps by regularized dipole inversion.
"""

__version__ = "0.1.0"

from .volume import (
    ComplexVolume,
    GridSpec,
    Mask,
    Orientation,
    RoiStats,
    ScalarVolume,
    central_slab_mask,
    dft_3d,
    dilate_mask,
    erode_mask,
    roi_stats,
    rotate_90,
    rotate_arbitrary,
)
from .phantom import (
    CylinderGeometry,
    SphereGeometry,
    HeartGeometry,
    BrainLikeGeometry,
    LabeledPhantom,
    PhantomSpec,
    PlacedShape,
    RegionProps,
    brain_like_regions,
    build_phantom,
)
from .forward import (
    DipoleKernel,
    FieldConversion,
    dipole_kernel,
    hz_to_ppm,
    ppm_to_hz,
    susceptibility_field,
    total_field,
)
from .echo import (
    AcquisitionParams,
    EchoSeries,
    fit_frequency,
    nyquist_echo_spacing_ms,
    reference_divide,
    synthesize_echoes,
)
from .separation import (
    OrientationSet,
    OrientedField,
    OrthogonalityError,
    SeparationResult,
    complete_cylinder,
    complete_sphere,
    separate_general,
    separate_orthogonal,
)
from .inversion import (
    InversionParams,
    SolverDivergenceError,
    invert_total_for_comparison,
    qsm_cg,
    qsm_tkd,
)

__all__ = [name for name in dir() if not name.startswith("_")]
