"""Supplementary difference sets on cyclic groups and Goethals-Seidel Hadamard matrices."""

from .blocks import (
    BlockCandidate,
    DiffVector,
    diff_vector,
    emit_files,
    generate_candidates,
    make_candidate,
)
from .certificates import all_bundled, bundled
from .hadamard import (
    SdsCertificate,
    circulant_from_block,
    goethals_seidel,
    hadamard_from_certificate,
    skew_block_detect,
    verify_hadamard,
    verify_sds,
    verify_skew_hadamard,
)
from .matcher import (
    MatchProblem,
    MatchResult,
    build_hasher,
    halve_target,
    match,
    pack_tuple,
    run_match,
    verify_quadruple,
)
from .params import (
    FourSquares,
    ParameterSet,
    four_squares_decompositions,
    orbit_feasible,
    parameter_set,
)
from .zmod import (
    OrbitTable,
    SymClassTable,
    UnitSubgroup,
    negate_orbit,
    orbit_table,
    subgroup_closure,
    sym_class_table,
)

__version__ = "0.1.0"
