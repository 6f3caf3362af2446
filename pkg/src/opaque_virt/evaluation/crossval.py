"""Repeated k-fold cross-validation of response selection strategies."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import ValidationError

from ..entropy import derive_weights
from ..errors import ValidationFailure
from ..library import InteractionLibrary
from ..matcher import Matcher
from ..models import (
    AccuracyReport,
    AccuracyRow,
    EntropyMethod,
    EvaluationConfig,
    MatchStrategy,
    ProtocolKind,
    ScalerKind,
    ScalerSpec,
    StrategySpec,
)
from .decoders import DecodeError, Verdict, classify_response, decode

logger = structlog.get_logger(__name__)

ENTROPY_COMPARISON = (EntropyMethod.SHANNON, EntropyMethod.RICHNESS, EntropyMethod.SIMPSON)

# Values used for the parameters a sweep does not vary.
SCALER_DEFAULTS: Dict[ScalerKind, Dict[str, float]] = {
    ScalerKind.HYPERBOLIC: {"a": 1.0, "c": 10.0},
    ScalerKind.EXPONENTIAL: {"k": 5.0},
    ScalerKind.SIGMOID: {"k": 10.0, "tau": 0.5},
    ScalerKind.THRESHOLD: {"tau": 0.2},
}


class PartitionError(ValidationFailure):
    """Raised when a library cannot be split into the requested folds."""
    pass


class DatasetError(ValidationFailure):
    """Raised when a library is unusable for evaluation."""
    pass


class SweepParameterError(ValidationFailure):
    """Raised for a scaler sweep over an unknown parameter or invalid value."""
    pass


def kfold_split(library: InteractionLibrary, k: int, seed: int) -> List[List[int]]:
    """Partition library indices into ``k`` disjoint folds.

    Returns:
        Lists of 1-based library indices; sizes differ by at most one

    Raises:
        PartitionError: If ``k < 2`` or the library has fewer than ``k`` interactions
    """
    if k < 2:
        raise PartitionError(f"k must be at least 2, got {k}")
    if len(library) < k:
        raise PartitionError(f"Cannot split {len(library)} interactions into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(library)) + 1
    return [sorted(int(i) for i in fold) for fold in np.array_split(order, k)]


def validate_dataset(library: InteractionLibrary, kind: ProtocolKind) -> None:
    """Check every recorded response decodes under ``kind``.

    Raises:
        DatasetError: On the first undecodable response
    """
    library.require_non_empty()
    for index, interaction in library.indexed():
        try:
            decode(interaction.response, kind)
        except DecodeError as e:
            raise DatasetError(f"Response {index} does not decode as {kind.value}: {e}") from e


def _evaluate_fold(
    library: InteractionLibrary,
    fold: Sequence[int],
    strategies: Sequence[StrategySpec],
    kind: ProtocolKind,
) -> List[Tuple[int, int]]:
    """(valid, invalid) per strategy for one evaluation fold."""
    held_out = set(fold)
    training = library.select([i for i in range(1, len(library) + 1) if i not in held_out])
    requests = [library[i].request for i in fold]
    expected = [library[i].response for i in fold]

    counts = []
    for spec in strategies:
        weights = None
        if spec.strategy == MatchStrategy.NW_WEIGHTED:
            weights = derive_weights(training, spec.method, spec.scaler)
        selections = Matcher(training, spec.matcher_config(weights)).select_many(requests)
        valid = 0
        for selection, reference in zip(selections, expected):
            emulated = b"" if selection.silent else selection.response
            if classify_response(emulated, reference, kind) == Verdict.VALID:
                valid += 1
        counts.append((valid, len(fold) - valid))
    return counts


def evaluate(
    library: InteractionLibrary,
    config: EvaluationConfig,
    kind: ProtocolKind,
    dataset: str = "library",
    workers: int = 1,
) -> AccuracyReport:
    """Repeated k-fold accuracy of every configured strategy.

    Weights are derived from each training set alone and every evaluation
    request is matched against its training set only.

    Args:
        library: Interactions whose responses all decode under ``kind``
        config: Folds, repeats, seeds and strategies
        kind: Protocol used to classify emulated responses
        dataset: Name recorded in the report
        workers: Threads evaluating folds concurrently

    Raises:
        DatasetError: If a recorded response does not decode
        PartitionError: If the library is smaller than ``config.k``
    """
    validate_dataset(library, kind)
    strategies = config.strategies
    partitions = [kfold_split(library, config.k, seed) for seed in config.seeds]
    jobs = [(repeat, fold) for repeat, folds in enumerate(partitions) for fold in folds]

    def run(job: Tuple[int, List[int]]) -> List[Tuple[int, int]]:
        return _evaluate_fold(library, job[1], strategies, kind)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    valid = np.zeros((config.repeats, len(strategies)), dtype=np.int64)
    invalid = np.zeros_like(valid)
    for (repeat, _), counts in zip(jobs, outcomes):
        for position, (ok, bad) in enumerate(counts):
            valid[repeat, position] += ok
            invalid[repeat, position] += bad

    per_repeat = valid / (valid + invalid)
    for repeat, seed in enumerate(config.seeds):
        logger.info(
            "Evaluation repeat finished",
            repeat=repeat,
            seed=seed,
            accuracy={spec.label: round(float(a), 4) for spec, a in zip(strategies, per_repeat[repeat])},
        )

    rows = []
    for position, spec in enumerate(strategies):
        accuracies = per_repeat[:, position]
        rows.append(AccuracyRow(
            label=spec.label,
            strategy=spec.strategy,
            entropy_method=spec.method,
            scaler=spec.scaler.to_file_dict() if spec.scaler else None,
            params=spec.scaler.describe() if spec.scaler else "",
            valid=int(valid[:, position].sum()),
            invalid=int(invalid[:, position].sum()),
            per_repeat=[float(a) for a in accuracies],
            mean=float(accuracies.mean()),
            std=float(accuracies.std(ddof=1)) if config.repeats > 1 else 0.0,
        ))

    return AccuracyReport(
        dataset=dataset,
        kind=kind,
        k=config.k,
        repeats=config.repeats,
        seeds=list(config.seeds),
        rows=rows,
    )


def compare_entropy_methods(
    library: InteractionLibrary,
    kind: ProtocolKind,
    scaler: ScalerSpec,
    config: EvaluationConfig,
    methods: Sequence[EntropyMethod] = ENTROPY_COMPARISON,
    **kwargs,
) -> AccuracyReport:
    """Evaluate plain NW and weighted NW under each entropy method."""
    strategies = [StrategySpec(strategy=MatchStrategy.NW_PLAIN)] + [
        StrategySpec(strategy=MatchStrategy.NW_WEIGHTED, method=method, scaler=scaler)
        for method in methods
    ]
    return evaluate(library, config.model_copy(update={"strategies": strategies}), kind, **kwargs)


def scaler_grid(
    scaler_kind: ScalerKind,
    parameter: str,
    values: Sequence[float],
    base: Optional[ScalerSpec] = None,
) -> List[ScalerSpec]:
    """Scalers varying one parameter, the others fixed at ``base`` or defaults.

    Raises:
        SweepParameterError: If the parameter does not belong to the kind or a value is invalid
    """
    fixed = dict(SCALER_DEFAULTS[scaler_kind])
    if base is not None and base.kind == scaler_kind:
        fixed.update(base.parameters())
    if parameter not in fixed:
        raise SweepParameterError(
            f"Scaler '{scaler_kind.value}' has no parameter '{parameter}' "
            f"(expected one of: {', '.join(fixed)})"
        )
    grid = []
    for value in values:
        try:
            grid.append(ScalerSpec(kind=scaler_kind, **{**fixed, parameter: value}))
        except ValidationError as e:
            raise SweepParameterError(f"Invalid {scaler_kind.value}.{parameter}={value}: {e}") from e
    return grid


def sweep_scaler(
    library: InteractionLibrary,
    kind: ProtocolKind,
    method: EntropyMethod,
    scaler_kind: ScalerKind,
    parameter: str,
    values: Sequence[float],
    config: EvaluationConfig,
    base: Optional[ScalerSpec] = None,
    **kwargs,
) -> AccuracyReport:
    """Evaluate weighted NW at every point of a one-parameter scaler sweep."""
    strategies = [
        StrategySpec(strategy=MatchStrategy.NW_WEIGHTED, method=method, scaler=scaler)
        for scaler in scaler_grid(scaler_kind, parameter, values, base)
    ]
    return evaluate(library, config.model_copy(update={"strategies": strategies}), kind, **kwargs)
