"""Monte Carlo estimation of flag quermassintegrals of convex bodies."""
from .bodies import (
    Ball,
    Body,
    Cube,
    Ellipsoid,
    GeometryError,
    PolytopeH,
    PolytopeV,
    body_from_dict,
    body_to_dict,
    mean_width,
)
from .estimate import Estimate, EstimationError
from .quermass import (
    Permutation,
    ball_closed_form,
    ellipsoid_oracle_psi,
    phi_full,
    phi_omega,
    phi_r,
    psi_full,
    psi_omega,
    psi_r,
)
from .sampling import Flag, Frame, IndexSeq

__version__ = "0.1.0"
