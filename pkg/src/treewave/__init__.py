"""Wave, heat and Schrödinger equations on metric trees, and recovery of the
edge potentials from boundary traces by leaf peeling."""
from .errors import CFLError, NetworkFormatError, NumericalError, TreewaveError, ValidationError
from .graph import (MetricTree, PeelPlan, figure1_tree, parse_network, peel_schedule, random_tree,
                    read_network, serialize_network, single_edge, star_tree, validate_tree)
from .fields import NetworkField, NetworkGrid, SolutionField, discretize
from .wave import solve_wave
from .implicit import solve_heat, solve_schrodinger
from .diagnostics import energy, extract_trace, kirchhoff_residual
from .traces import (NoiseSpec, TraceRecord, add_noise, norm_H1_time, norm_L2_space, norm_L2_time,
                     reznitzkaya)
from .edge_inverse import (EdgeInverseProblem, InverseConfig, edge_misfit, edge_transfer,
                           recover_edge_potential)
from .peeling import Measurements, node_transfer, peel_tree, residual_certificate
from .report import VERSION as __version__, ExperimentReport
from .experiments import run_observability, run_stability, run_uniqueness_check

__all__ = [n for n in dir() if not n.startswith("_")]
