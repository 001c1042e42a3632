"""Tri-level defender/attacker/operator max-flow interdiction with decision-dependent failures."""

from .def_benchmark import ScenarioSet, def_attacker_best_response, def_expected_value, def_solve
from .flow import (CutCertificate, OpCounter, counting, max_flow, mean_value_recourse,
                   penalty_recourse)
from .instance import (ATTACKER, DEFENDER, Allocation, Arc, InstanceError, InvariantError,
                       NetworkInstance, SchemaError, build_network, generate_grid,
                       generate_random, load, save)
from .masters import (AttackerPlanPool, Report, SolverConfig, attacker_best_response,
                      enumerate_allocations, solve_defender)
from .oracle import best_response_exact, expected_value, trilevel_exact
from .partition import (Cell, NoContestedArc, PartitionTree, cell_error, refine,
                        select_refinement_arc, tree_bound)
from .prob import (StateProbabilityModel, cell_mean, cell_prob, edge_cond_prob, scenario_prob,
                   state_prob)

__version__ = "0.1.0"
