"""The closed loop that decides between two candidate models.

Each iteration applies a stimulus to the reference, refits both candidates
to the new measurement, evaluates the stopping rule, and (when the verdict
is still open) designs the next stimulus to maximize the disagreement
between the freshly fitted candidates.

The stopping rule, evaluated after the refit of iteration ``i``:

* past the iteration budget: inconclusive;
* exactly one candidate fits the data well enough: it wins once its
  parameters have stopped moving between refits ("sole_fit");
* both fit: once the better-fitting candidate's parameters have settled,
  the model with fewer parameters wins — equal explanatory power goes to
  the simpler description ("occam");
* otherwise the loop continues.

The fit threshold is relative by default: a fraction of the integrated
squared measurement, resolved against each iteration's dataset.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .control import ControlDesignConfig, ControlMemory, design_control, first_pulse
from .errors import ConfigurationError, ContractError, ReferenceFailure
from .estimation import Dataset, FitConfig, fit, loss
from .grid import ControlSignal, trapezoid
from .kinetics import ModelInstance


class VerdictStatus(enum.Enum):
    ONGOING = "ongoing"
    CONCLUSIVE = "conclusive"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    status: VerdictStatus
    winner: int | None = None       # index into the candidate pair
    reason: str | None = None       # "sole_fit" or "occam"

    def to_dict(self) -> dict:
        return {"status": self.status.value, "winner": self.winner, "reason": self.reason}


@dataclass(frozen=True)
class StoppingThresholds:
    """Budget and tolerances of the stopping rule.

    ``loss_max`` is the absolute fit threshold; when None it is resolved per
    iteration as ``loss_max_rel`` times the integrated squared measurement.
    A resolved threshold of exactly zero (an all-dark measurement) is
    unsatisfiable under the strict comparison, so structurally zero data can
    never declare a fit.
    """

    i_max: int = 40
    loss_max: float | None = None
    loss_max_rel: float = 1e-2
    delta_max: float = 1e-3

    def __post_init__(self):
        if not (isinstance(self.i_max, (int, np.integer)) and self.i_max >= 1):
            raise ContractError(f"i_max must be a positive integer, got {self.i_max!r}")
        if self.loss_max is not None and not self.loss_max >= 0:
            raise ContractError(f"loss_max must be non-negative, got {self.loss_max!r}")
        if not self.loss_max_rel > 0:
            raise ContractError(f"loss_max_rel must be positive, got {self.loss_max_rel!r}")
        if not self.delta_max > 0:
            raise ContractError(f"delta_max must be positive, got {self.delta_max!r}")

    def resolve(self, measured_energy: float) -> "StoppingThresholds":
        """Fix the absolute fit threshold against one dataset's energy."""
        if self.loss_max is not None:
            return self
        return replace(self, loss_max=self.loss_max_rel * float(measured_energy))


def stopping_verdict(iteration: int, losses: Sequence[float], increments: Sequence[float],
                     candidates: Sequence[ModelInstance],
                     thresholds: StoppingThresholds) -> Verdict:
    """Apply the stopping rule to one iteration's post-fit state.

    ``losses`` and ``increments`` are per candidate: the post-fit loss on the
    newest dataset and the largest parameter movement of the latest refit.
    """
    if thresholds.loss_max is None:
        raise ContractError("thresholds must be resolved to an absolute loss_max first")
    if len(losses) != 2 or len(increments) != 2 or len(candidates) != 2:
        raise ContractError("the stopping rule compares exactly two candidates")
    if iteration > thresholds.i_max:
        return Verdict(VerdictStatus.INCONCLUSIVE)
    fits = [k for k in range(2) if losses[k] < thresholds.loss_max]
    if len(fits) == 1:
        k = fits[0]
        if increments[k] < thresholds.delta_max:
            return Verdict(VerdictStatus.CONCLUSIVE, winner=k, reason="sole_fit")
        return Verdict(VerdictStatus.ONGOING)
    if len(fits) == 2:
        # Both candidates explain the data.  The best-fitting one must have
        # settled (its parameters stopped moving); the simpler model then
        # wins outright, with candidate order breaking complexity ties.
        k_star = 0 if losses[0] <= losses[1] else 1
        if increments[k_star] < thresholds.delta_max:
            winner = min(range(2), key=lambda j: (candidates[j].kind.complexity, j))
            return Verdict(VerdictStatus.CONCLUSIVE, winner=winner, reason="occam")
        return Verdict(VerdictStatus.ONGOING)
    return Verdict(VerdictStatus.ONGOING)


@dataclass(frozen=True)
class IterationRecord:
    """Everything one loop iteration produced."""

    index: int                              # 1-based iteration counter
    control: ControlSignal
    loss_prefit: tuple[float, float]        # on the new dataset, before refit
    loss_postfit: tuple[float, float]       # after refit
    increments: tuple[float, float]         # largest parameter movement per candidate
    thetas: tuple[np.ndarray, np.ndarray]   # post-fit parameters
    verdict: Verdict


@dataclass(frozen=True)
class DiscriminationReport:
    """Outcome of one pairwise loop, with the full per-iteration history.

    ``truncated`` marks runs cut short by a reference failure; the records
    collected before the failure are retained.  Wall time is measured but
    deliberately kept out of the serialized form so that repeated runs with
    one seed produce identical bytes.
    """

    candidates: tuple[ModelInstance, ModelInstance]
    records: tuple[IterationRecord, ...]
    verdict: Verdict
    truncated: bool = False
    failure: str | None = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def final_thetas(self) -> tuple[np.ndarray, np.ndarray]:
        if self.records:
            return self.records[-1].thetas
        return (self.candidates[0].theta, self.candidates[1].theta)


def record_to_dict(record: IterationRecord, control_csv_path: str | None = None) -> dict:
    """The JSONL form of one iteration."""
    return {
        "iter": record.index,
        "control_csv_path": control_csv_path,
        "loss_prefit": [float(v) for v in record.loss_prefit],
        "loss_postfit": [float(v) for v in record.loss_postfit],
        "dtheta": [float(v) for v in record.increments],
        "theta": [[float(v) for v in th] for th in record.thetas],
        "verdict": record.verdict.to_dict(),
    }


def report_to_dict(report: DiscriminationReport,
                   control_csv_paths: Sequence[str] | None = None) -> dict:
    paths = list(control_csv_paths) if control_csv_paths is not None else None
    if paths is not None and len(paths) != len(report.records):
        raise ContractError("one control path per record is required")
    return {
        "candidates": [c.kind.label for c in report.candidates],
        "initial_theta": [[float(v) for v in c.theta] for c in report.candidates],
        "records": [
            record_to_dict(rec, paths[i] if paths is not None else None)
            for i, rec in enumerate(report.records)
        ],
        "verdict": report.verdict.to_dict(),
        "final_theta": [[float(v) for v in th] for th in report.final_thetas],
        "truncated": report.truncated,
        "failure": report.failure,
    }


def canonical_json(payload) -> str:
    """Key-sorted, whitespace-free JSON with round-trip float formatting."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def run_discrimination(reference, candidates: Sequence[ModelInstance],
                       thresholds: StoppingThresholds, fit_config: FitConfig,
                       control_config: ControlDesignConfig, seed: int = 0, *,
                       on_iteration: Callable[[IterationRecord], None] | None = None
                       ) -> DiscriminationReport:
    """Run the closed loop for one candidate pair against one reference.

    The reference only needs ``capabilities`` and ``apply``; it may be an
    in-process simulation or a wire client.  A reference failure mid-run
    yields a truncated, inconclusive report instead of an exception.
    Deterministic for a fixed (reference, candidates, configs, seed).
    """
    if len(candidates) != 2:
        raise ContractError("discrimination runs on exactly two candidates")
    caps = reference.capabilities
    grid = caps.grid
    if control_config.u_hi > caps.u_hi + 1e-12:
        raise ConfigurationError(
            f"design ceiling {control_config.u_hi} exceeds what the reference "
            f"accepts ({caps.u_hi})")

    models = [ModelInstance(c.kind, c.theta) for c in candidates]
    memory = ControlMemory(control_config.memory_size)
    datasets: list[Dataset] = []
    records: list[IterationRecord] = []
    control = first_pulse(grid, control_config)

    started = time.perf_counter()
    truncated = False
    failure: str | None = None
    verdict = Verdict(VerdictStatus.ONGOING)

    iteration = 1
    while True:
        try:
            measured = reference.apply(control)
        except ReferenceFailure as exc:
            truncated = True
            failure = str(exc)
            verdict = Verdict(VerdictStatus.INCONCLUSIVE)
            break
        dataset = Dataset(control, measured)
        datasets.append(dataset)

        prefit = tuple(loss(m.kind, m.theta, dataset) for m in models)
        reports = [fit(m.kind, m.theta, datasets, fit_config) for m in models]
        models = [m.with_theta(rep.theta) for m, rep in zip(models, reports)]
        postfit = tuple(loss(m.kind, m.theta, dataset) for m in models)
        increments = tuple(rep.max_param_increment for rep in reports)

        resolved = thresholds.resolve(trapezoid(measured.values ** 2, grid.dt))
        verdict = stopping_verdict(iteration, postfit, increments, models, resolved)
        if verdict.status is VerdictStatus.ONGOING and iteration >= thresholds.i_max:
            # The budget is spent; the rule sees the overrun explicitly.
            verdict = stopping_verdict(iteration + 1, postfit, increments, models, resolved)

        memory.push(control)
        record = IterationRecord(
            index=iteration,
            control=control,
            loss_prefit=prefit,
            loss_postfit=postfit,
            increments=increments,
            thetas=(models[0].theta, models[1].theta),
            verdict=verdict,
        )
        records.append(record)
        if on_iteration is not None:
            on_iteration(record)

        if verdict.status is not VerdictStatus.ONGOING:
            break
        design_seed = np.random.SeedSequence(entropy=(int(seed), iteration))
        control = design_control(models[0], models[1], memory, grid,
                                 control_config, seed=design_seed)
        iteration += 1

    return DiscriminationReport(
        candidates=(candidates[0], candidates[1]),
        records=tuple(records),
        verdict=verdict,
        truncated=truncated,
        failure=failure,
        wall_time=time.perf_counter() - started,
    )


@dataclass(frozen=True)
class MatchRecord:
    incumbent: int
    challenger: int
    report: DiscriminationReport
    winner: int                 # candidate index kept after this match
    conclusive: bool


@dataclass(frozen=True)
class TournamentResult:
    """Winner-stays sequence of pairwise matches over an ordered candidate list."""

    winner: int
    matches: tuple[MatchRecord, ...]
    conclusive: bool            # False when every match failed to separate the pair

    def to_dict(self) -> dict:
        return {
            "winner": self.winner,
            "conclusive": self.conclusive,
            "matches": [
                {
                    "incumbent": m.incumbent,
                    "challenger": m.challenger,
                    "winner": m.winner,
                    "conclusive": m.conclusive,
                    "report": report_to_dict(m.report),
                }
                for m in self.matches
            ],
        }


def tournament(reference, candidates: Sequence[ModelInstance],
               thresholds: StoppingThresholds, fit_config: FitConfig,
               control_config: ControlDesignConfig, seed: int = 0) -> TournamentResult:
    """Discriminate among several candidates by winner-stays pairwise matches.

    The incumbent carries its fitted parameters into the next match; each
    challenger enters with its own initial parameters.  An inconclusive match
    keeps the incumbent and is flagged.  A single-pair list reduces to
    ``run_discrimination`` with the same seed.
    """
    if len(candidates) < 2:
        raise ContractError("a tournament needs at least two candidates")
    instances = list(candidates)
    incumbent = 0
    matches: list[MatchRecord] = []
    for match_index, challenger in enumerate(range(1, len(instances))):
        pair = (instances[incumbent], instances[challenger])
        report = run_discrimination(reference, pair, thresholds, fit_config,
                                    control_config, seed=seed + 1000003 * match_index)
        conclusive = report.verdict.status is VerdictStatus.CONCLUSIVE
        if conclusive:
            local = report.verdict.winner
            winner = incumbent if local == 0 else challenger
            thetas = report.final_thetas
            instances[incumbent] = instances[incumbent].with_theta(thetas[0])
            instances[challenger] = instances[challenger].with_theta(thetas[1])
        else:
            winner = incumbent
        matches.append(MatchRecord(incumbent, challenger, report, winner, conclusive))
        incumbent = winner
    return TournamentResult(
        winner=incumbent,
        matches=tuple(matches),
        conclusive=any(m.conclusive for m in matches),
    )
