"""Extended Bell measurement: group matrix elements by row/column XOR and estimate <psi0|A|psi1>."""

__version__ = "0.1.0"

from .core import Gate, GroupKey, MeasurementCircuit, Part, cnot_cost, top_set_bit, xor_key
from .estimation import (
    EstimationReport,
    SelectingModel,
    ShadowSnapshot,
    estimate,
    estimate_exact,
    estimate_half,
    estimate_sampled,
    estimate_two_state,
    model_uniform,
    model_weighted,
    shadow_snapshot_value,
    variance_bounds,
)
from .grouping import (
    GroupingResult,
    MeasurementGroup,
    OutcomeTable,
    band_color_count,
    build_measurement_circuit,
    embed_offdiagonal,
    expected_groups,
    group_terms,
    pauli_string_count,
    pauli_to_xbm_groups,
    upper_bound_m,
)
from .matrix import (
    MatrixStats,
    PauliString,
    SparseObservable,
    gen_one_sparse_all_colors,
    gen_random_band,
    gen_random_sparse,
    load_matrix_market,
    load_observable,
    matrix_stats,
    pauli_decompose,
)
from .simulator import Statevector, apply_circuit, apply_gate, prepare_bipartite, probabilities, random_state, sample
