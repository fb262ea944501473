"""
mmflow: minimizing-movements curvature flows on pixel grids

Copyright (C) 2026 mmflow developers.

This library evolves sets and level functions by anisotropic, nonlinear and forced
curvature flows V = psi(nu) G(-kappa + f) with an implicit time-stepping scheme whose
every step is an exact graph min-cut.


FlowContext(grid, perimeter, anisotropy, nonlinearity, forcing, params, threads=1)

        Bundle every model a step needs:

        grid (Grid):                     nx by ny lattice of square cells of width dx.

        perimeter (PerimeterModel):      PerimeterModel.crofton(16) for the classical perimeter,
                                         PerimeterModel.fractional(s, cutoff, dx) for the truncated
                                         s-fractional perimeter.

        anisotropy (Anisotropy):         mobility psi: Anisotropy("euclidean"), Anisotropy("maxnorm")
                                         or Anisotropy("weighted", (w1, w2)).

        nonlinearity (Nonlinearity):     speed law G: "identity", "clamp" (M), "power" (gamma),
                                         "negative_part" or "piecewise" (table).

        forcing (Forcing):               f(t): "zero", "constant" (value) or "sampled" (times, values).

        params (SchemeParams):           time step h, horizon T, level count, margin and the
                                         minimizer choice ("minimal" or "maximal").

        threads (int):                   workers for the per-level solves of the level-set lifting.


The main operations:

    atw_step(E, phase, ctx, k)
        one step of the scheme on a CellSet, bounded or the complement of a bounded set

    lift_step(u, ctx, k)
        one step of the level-set operator on a LevelFunction

    evolve(u0, ctx)
        iterate lift_step over [0, T] and return an EvolutionRecord

    signed_distance(E, a)
        anisotropic signed distance field of a cell set

    estimate_curvature(J, E, probe)
        discrete curvature of a set from perimeter differences of probe disks

    exact_ball_radius(n, f, r0, t), barrier_radius(r0, t, ctx), fd_reference_evolve(u0, n, f, T)
        independent reference solutions


Command line:

    mmflow run --config <path> --out <dir>
    mmflow preset --name <preset> --out <dir>
    mmflow verify --suite quick

    The number of solver threads can be set with --threads or the MMFLOW_THREADS
    environment variable.
"""

from .common import (MMFlowError, ConfigError, SchemeError, MarginBreach, NestingViolation,
                     InfeasibleConstraints, DegenerateSetError, GridTooLarge, CFLViolation)
from .core import (Grid, CellSet, Phase, LevelFunction, Anisotropy, Nonlinearity, Forcing, SchemeParams,
                   FlowContext, psi_eval, psi_polar, g_eval, forcing_step_average)
from .perimeter import (PerimeterModel, CurvatureProbe, perimeter_energy, weighted_total_variation,
                        coarea_energy, estimate_curvature, curvature_bracket, ball_curvature_envelope)
from .distance import DistanceField, signed_distance, signed_distance_bruteforce, level_band
from .atw import (StepEnergy, StepResult, build_step_energy, minimize_step, enumerate_minimizers, atw_step,
                  truncation_sequence_check, comparison_check, dissipation_check, interface_displacement)
from .levelset import (LevelStack, EvolutionRecord, decompose, lift_step, evolve, modulus_check,
                       h_refinement_study, level_tracking_check, fattening_report, operator_law_check)
from .oracles import (BallFlow, FDState, exact_ball_radius, barrier_radius, kappa_hat, extinction_time,
                      fd_reference_evolve, measure_radius, hausdorff_distance)
from .cli import RunConfig, RunReport, parse_config, preset, run, verify
