"""Heights of matrix sets over number fields and covolumes of arithmetic lattices."""
from .nfield import FieldElement, NumberField, Place, make_field, zeta2
from .heights import MatrixOverK, AlgebraicNumber, height_matrix, height_set, height_algebraic, nheight_bounds
from .mobius import Ambient, BasePoint, GElement, GroupSignature, classify, displacement, is_generic, translation_length
from .qalg import make_algebra, make_lattice, max_lattice_covolume, min_covolume, index_bounds_from_generic
from .generic import Word, search_generic, discriminant_decomposition, measure_epsilon
from .gaplab import bianchi_catalog, gap_check, gap_scan, margulis_scan

__version__ = "0.1.0"
