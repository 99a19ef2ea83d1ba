"""Built-in certificate plugins."""

from .block_identities import BlockIdentitiesCertificate
from .bvp_linearity import BvpLinearityCertificate
from .equal_action import EqualActionCertificate
from .fiber_certificates import FiberCertificate
from .four_intersections import FourIntersectionsCertificate
from .scattering_det import ScatteringDetCertificate
from .symplecticity import SymplecticityCertificate
from .transversality import TransversalityCertificate

BUILTIN_CERTIFICATES = {
    "symplecticity": SymplecticityCertificate,
    "block_identities": BlockIdentitiesCertificate,
    "transversality": TransversalityCertificate,
    "scattering_det": ScatteringDetCertificate,
    "bvp_linearity": BvpLinearityCertificate,
    "equal_action": EqualActionCertificate,
    "four_intersections": FourIntersectionsCertificate,
    "fiber_certificates": FiberCertificate,
}
