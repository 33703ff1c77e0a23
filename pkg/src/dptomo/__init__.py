"""Time-multiplexed click detector simulation and data-pattern tomography."""

from .fock import apply_loss, fidelity, pdc_distribution, poisson_product, wigner_at_origin
from .tmd import DetectorConfig, exact_pattern_distribution, sample_patterns
from .probes import CoherentProbe, PatternLibrary, estimate_efficiency, generate_probe_grid, simulate_library
from .fit import FitResult, assemble, solve
from .stats import BootstrapEnsemble, bootstrap_reconstruct

__version__ = "0.1.0"
