"""Size-conditioned Galton-Watson trees, their lineages and globally centered discrete snakes."""

from .gw import OffspringDistribution, RandomStream, sample_conditioned
from .lineage import compute_lineage, g_process
from .multinomial import IndexSetIK
from .snake import DisplacementFamily, assign_labels, decompose, label_process
from .trees import GridPath, PlanarTree, tree_from_degrees

__all__ = [
    "DisplacementFamily",
    "GridPath",
    "IndexSetIK",
    "OffspringDistribution",
    "PlanarTree",
    "RandomStream",
    "assign_labels",
    "compute_lineage",
    "decompose",
    "g_process",
    "label_process",
    "sample_conditioned",
    "tree_from_degrees",
]
__version__ = "0.1.0"
