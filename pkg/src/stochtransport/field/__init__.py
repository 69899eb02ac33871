"""Drift fields, initial data, mollifiers, cutoffs and Hölder norms."""

from .catalog import (
    DATUM_CATALOG,
    FIELD_CATALOG,
    SMOOTH,
    SOBOLEV,
    ScalarDatum,
    VectorField,
    bump_datum,
    cellular_field,
    cone_datum,
    constant_field,
    divergence_estimate,
    evaluate_field,
    expansion_field,
    gaussian_datum,
    make_datum,
    make_field,
    rotation_field,
    scaled_datum,
    shear_holder_field,
    strain_field,
    zero_datum,
    zero_field,
)
from .cutoff import (
    CutoffSpec,
    cutoff_constants,
    cutoff_gradient,
    cutoff_laplacian,
    cutoff_value,
    widening_cutoff_gradient,
    widening_cutoff_value,
)
from .holder import HolderSampler, holder_norm_estimate
from .mollify import MollifierSpec, kernel_stencil, mollifier_density, mollify_datum, mollify_field
