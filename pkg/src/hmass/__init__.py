"""Polyhedral chains, H-mass functionals, flat norms, and polyhedral
approximation of rectifiable currents."""

from .chains import (
    PolyhedralChain,
    Simplex,
    WeightedSimplex,
    ZeroChain,
    add,
    boundary,
    chain_from_json,
    chain_to_json,
    mass,
    overlap_check,
    scale,
)
from .flatnorm import flat_distance_upper, flat_zero, simplicial_flat_upper
from .functionals import h_mass_patch, h_mass_zero, phi_h, relaxation_liminf
from .hfuncs import (
    AbsH,
    AffineIndicatorH,
    IndicatorH,
    PowerH,
    TabulatedH,
    even_extension,
    h_from_json,
    h_to_json,
    infinite_slope_check,
    small_mass_bound,
    verify_assumptions,
)
from .rectifiable import (
    RectifiableCurrent,
    RectifiablePatch,
    TangentDisc,
    blowup_ratio,
    patch_flat_distance_upper,
    patch_mass,
    poly_approximate,
    select_balls,
    tangent_disc,
)
from .slicing import calibrate_constant, haar_sample, intgeo_estimate, lsc_slice_check, slice_chain

__version__ = "0.1.0"
