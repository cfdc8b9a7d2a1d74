"""Lattice toolkit for Skorokhod-space membership of random fields.

Computes two-sided discontinuity moduli of lattice-sampled random fields,
calibrates factorized tail estimates from trajectories, assembles entropy
series tail bounds and their closed forms, provides Grand-Lebesgue moment
calculus (natural generating functions, exponential tails, mixed-moment
optimizers, sum-uniform inflation), and verifies everything against Monte
Carlo at desk scale, including a CLT harness for empirical fields.
"""

from .domain import Lattice, OrderedTriple, corner_vector, enumerate_masks, enumerate_triples, leq
from .errors import SkorofieldError
from .fields import (
    BetaMarginal,
    CenteredIndicatorField,
    ConstantField,
    CovarianceTable,
    GaussianField,
    IndicatorField,
    PartialSumField,
    ProductDistribution,
    SamplePath,
    SeedSpec,
    TabulatedMarginal,
    UniformMarginal,
    empirical_covariance,
    gaussian_reference,
    partial_sum_path,
    sample_path,
    uniform_distribution,
)
from .glspace import (
    HolderTuple,
    PsiFunction,
    beta_distance,
    delta_plus,
    gls_norm,
    holder_mixed_bound,
    legendre,
    lp_norm,
    min_tail_bound,
    natural_psi,
    rosenthal_K,
    rosenthal_transform,
    yf_tail,
)
from .modulus import (
    ArctanReport,
    ModulusCurve,
    TailCurve,
    arctan_criterion,
    classical_modulus,
    default_h_grid,
    increments,
    kappa_batch,
    kappa_curve,
    omega_curve,
    ps_modulus,
    ps_modulus_naive,
    tail_curve_mc,
    tau,
)
from .quasidist import (
    AnisotropicSum,
    CoveringReport,
    PowerEuclidean,
    QuasiDistance,
    TabulatedQ,
    covering_number,
    entropy_fit,
    normalize,
    sigma,
)
from .bounds import (
    AssembledBound,
    BoundReport,
    KeyEstimate,
    QOptimizeResult,
    QSeriesResult,
    SequenceFamily,
    W,
    assemble_kappa_bound,
    clt_uniform_bound,
    gls_envelope_bound,
    kappa_bound_report,
    natural_key_estimate,
    q_optimize,
    q_series,
    theorem31_bound,
    theorem31_sequences,
)
from .clt import (
    CltReport,
    FddReport,
    RosenthalReport,
    SupLawReport,
    UniformTailReport,
    fdd_check,
    kolmogorov_cdf,
    rosenthal_empirical,
    sup_statistic_law,
    uniform_tail_check,
)

__version__ = "0.1.0"
