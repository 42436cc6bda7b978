"""Stateful tumor simulation over a score.

One part is selected as the founder; its next n measures become a
leitmotif that repeats in place of the part progressing.  Time advances
in cycles of n measures.  Every cycle, each living mutant part may spawn
a copy of itself into a new part (rest-padded until its first entrance)
and undergoes one Bernoulli trial per mutation operator; mutations edit
the part's stored leitmotif and are inherited by all later repeats and
offspring.  Therapy, when enabled, silences each part independently with
probability (1 - survival_rate) from the therapy measure onward.

Runs are fully deterministic in (score, params).  The RNG is Python's
Mersenne Twister (``random.Random``) seeded with the 64-bit ``seed``;
a draw is a single ``random()`` call.  The draw order is part of the
external contract:

1. founder part index;
2. start fraction (consumed even when ``cancer_start`` is set, used only
   when it is None);
3. per cycle: survival draws in part-creation order if this is the
   therapy cycle; then, for each living part in creation order, one
   reproduction trial when the part is below its offspring cap and the
   next window begins inside the piece, an offset draw when reproduction
   fires, then five operator trials in the fixed order insertion,
   deletion, inversion, translocation, transposition — a fired trial
   draws the target measure index and then the operator's internal
   draws (the child spawned this cycle takes its five trials right
   after its parent's).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .model import Measure, Part, Score, TimeSignature, rest_measure
from .ops import (
    DELETION,
    INSERTION,
    INVERSION,
    TRANSLOCATION,
    TRANSPOSITION,
    Leitmotif,
    MutationEvent,
    draw_index,
    op_deletion,
    op_insertion,
    op_inversion,
    op_translocation,
    op_transposition,
)

# Lineage nodes allowed before a run aborts; keeps output files tractable.
PART_CEILING = 64

# Unset cancer_start resolves to a uniform draw over this range of the piece.
RANDOM_START_SPAN = 0.25

MAX_SEED = 2**64 - 1


class ParameterError(ValueError):
    """Engine parameters are out of range or do not fit the score."""


class EngineError(RuntimeError):
    """The simulation had to abort (e.g. the part ceiling was hit)."""


@dataclass(frozen=True)
class EngineParams:
    """The knobs steering a run.

    Probabilities are per cycle per part.  ``cancer_start`` and
    ``therapy_start`` are fractions of the piece length; a None
    ``cancer_start`` is drawn uniformly in [0, 0.25) from the seed.
    """

    p_insertion: float = 0.3
    p_deletion: float = 0.3
    p_inversion: float = 0.3
    p_translocation: float = 0.3
    p_transposition: float = 0.3
    max_offspring: int = 2
    cancer_start: Optional[float] = 0.1
    leitmotif_length_n: int = 2
    p_reproduction: float = 0.5
    treatment_enabled: bool = False
    survival_rate: float = 0.2
    therapy_start: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_insertion", "p_deletion", "p_inversion",
                     "p_translocation", "p_transposition", "p_reproduction",
                     "survival_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {value}")
        if self.max_offspring < 1:
            raise ParameterError("max_offspring must be at least 1")
        if self.leitmotif_length_n < 1:
            raise ParameterError("leitmotif_length_n must be at least 1")
        if self.cancer_start is not None and not 0.0 <= self.cancer_start < 1.0:
            raise ParameterError(
                f"cancer_start must be in [0, 1), got {self.cancer_start}"
            )
        if not 0.0 < self.therapy_start <= 1.0:
            raise ParameterError(
                f"therapy_start must be in (0, 1], got {self.therapy_start}"
            )
        if (self.treatment_enabled and self.cancer_start is not None
                and self.therapy_start <= self.cancer_start):
            raise ParameterError(
                f"therapy_start ({self.therapy_start}) must exceed "
                f"cancer_start ({self.cancer_start}) when treatment is enabled"
            )
        if not 0 <= self.seed <= MAX_SEED:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def operator_probabilities(self) -> tuple[tuple[str, float], ...]:
        return (
            (INSERTION, self.p_insertion),
            (DELETION, self.p_deletion),
            (INVERSION, self.p_inversion),
            (TRANSLOCATION, self.p_translocation),
            (TRANSPOSITION, self.p_transposition),
        )


@dataclass
class MutantPart:
    """A live cancer lineage: its theme, ancestry and fate.

    ``history[k]`` snapshots the leitmotif as it stood at the start of
    cycle ``birth_cycle + k``; output measures are reconstructed from it.
    """

    part_id: str
    parent: Optional[str]
    leitmotif: Leitmotif
    spawn_measure: int
    offset: int
    alive: bool = True
    offspring_count: int = 0
    birth_cycle: int = 1
    history: list[tuple[Measure, ...]] = field(default_factory=list, repr=False)

    @property
    def first_sounding_measure(self) -> int:
        return self.spawn_measure + self.offset


@dataclass
class TherapyRecord:
    start_measure: int
    killed: list[str]
    survived: list[str]


@dataclass
class LineageTree:
    """Everything a run did: ancestry, events and the therapy outcome."""

    nodes: dict[str, MutantPart]
    events: list[MutationEvent]
    therapy: Optional[TherapyRecord] = None

    @property
    def founder(self) -> MutantPart:
        return next(p for p in self.nodes.values() if p.parent is None)


@dataclass
class EngineState:
    """Mutable run state threaded through the cycle steps."""

    score: Score
    params: EngineParams
    start: int
    total_measures: int
    num_cycles: int
    cycle: int  # 1-based index of the next cycle to process
    parts: list[MutantPart]
    events: list[MutationEvent]
    therapy: Optional[TherapyRecord] = None

    @property
    def founder(self) -> MutantPart:
        return self.parts[0]


def select_founder(score: Score, params: EngineParams,
                   rng: random.Random) -> MutantPart:
    """Pick the part that turns cancerous and cut its leitmotif.

    Consumes two draws: the founder part index and the start fraction
    (the latter only takes effect when ``cancer_start`` is None).
    """
    founder_index = draw_index(rng, len(score.parts))
    start_draw = rng.random()
    fraction = params.cancer_start
    if fraction is None:
        fraction = start_draw * RANDOM_START_SPAN
        if params.treatment_enabled and params.therapy_start <= fraction:
            raise ParameterError(
                f"drawn cancer_start {fraction:.4f} is not below "
                f"therapy_start {params.therapy_start}"
            )
    total = score.measure_count
    start = math.floor(fraction * total)
    n = params.leitmotif_length_n
    if start + n > total:
        raise ParameterError(
            f"leitmotif of {n} measures does not fit: start measure {start} "
            f"with only {total} measures in the piece"
        )
    founder_part = score.parts[founder_index]
    motif_measures = tuple(
        replace(m, index=i)
        for i, m in enumerate(founder_part.measures[start:start + n])
    )
    leitmotif = Leitmotif(measures=motif_measures,
                          source_part=founder_part.id, source_start=start)
    return MutantPart(part_id=founder_part.id, parent=None,
                      leitmotif=leitmotif, spawn_measure=start, offset=0)


def _check_uniform_region(score: Score, start: int) -> TimeSignature:
    timeline = score.time_signatures
    region = set(timeline[start:])
    if len(region) != 1:
        raise ParameterError(
            f"the time signature changes inside the repetition region "
            f"(measures {start}..{score.measure_count - 1}): {sorted(region)}; "
            f"leitmotif repetition needs a uniform meter there"
        )
    return timeline[start]


def new_state(score: Score, params: EngineParams,
              rng: random.Random) -> EngineState:
    """Initial engine state: founder selected, no cycles run yet."""
    founder = select_founder(score, params, rng)
    start = founder.spawn_measure
    _check_uniform_region(score, start)
    total = score.measure_count
    n = params.leitmotif_length_n
    num_cycles = -(-(total - start) // n)
    founder.history.append(founder.leitmotif.measures)
    return EngineState(score=score, params=params, start=start,
                       total_measures=total, num_cycles=num_cycles,
                       cycle=1, parts=[founder], events=[])


def _new_part_id(existing: set[str], founder_id: str, ordinal: int) -> str:
    candidate = f"{founder_id}-m{ordinal}"
    while candidate in existing:
        candidate += "x"
    return candidate


def _mutate_part(part: MutantPart, state: EngineState,
                 rng: random.Random) -> None:
    """One Bernoulli trial per operator, applied to the part's leitmotif."""
    n = len(part.leitmotif)
    cycle = state.cycle
    for kind, probability in state.params.operator_probabilities:
        if rng.random() >= probability:
            continue
        target = draw_index(rng, n)
        measures = part.leitmotif.measures
        if kind == INSERTION:
            mutated, event = op_insertion(measures[target], rng, part=part.part_id,
                                          measure_index=target, cycle=cycle)
        elif kind == DELETION:
            mutated, event = op_deletion(measures[target], rng, part=part.part_id,
                                         measure_index=target, cycle=cycle)
        elif kind == INVERSION:
            mutated, event = op_inversion(measures[target], rng, part=part.part_id,
                                          measure_index=target, cycle=cycle)
        elif kind == TRANSLOCATION:
            mutated, event = op_translocation(part.leitmotif, target, state.score,
                                              rng, part=part.part_id, cycle=cycle)
        else:
            mutated, event = op_transposition(measures[target], rng, part=part.part_id,
                                              measure_index=target, cycle=cycle)
        new_measures = measures[:target] + (mutated,) + measures[target + 1:]
        part.leitmotif = replace(part.leitmotif, measures=new_measures)
        state.events.append(event)


def step_cycle(state: EngineState, rng: random.Random) -> EngineState:
    """Advance one cycle: reproduction, then mutation, for every live part."""
    if state.cycle > state.num_cycles:
        raise EngineError("all cycles have already been processed")
    params = state.params
    n = params.leitmotif_length_n
    next_window = state.start + state.cycle * n
    existing_ids = {p.id for p in state.score.parts} | {p.part_id for p in state.parts}

    for part in list(state.parts):
        if not part.alive:
            continue
        child: Optional[MutantPart] = None
        can_reproduce = (part.offspring_count < params.max_offspring
                         and next_window < state.total_measures)
        if can_reproduce and rng.random() < params.p_reproduction:
            offset = draw_index(rng, n)
            if len(state.parts) + 1 > PART_CEILING:
                raise EngineError(
                    f"aborting: the run would exceed {PART_CEILING} mutant parts; "
                    f"lower p_reproduction or max_offspring"
                )
            child_id = _new_part_id(existing_ids, state.founder.part_id,
                                    len(state.parts))
            existing_ids.add(child_id)
            child = MutantPart(
                part_id=child_id, parent=part.part_id,
                leitmotif=part.leitmotif, spawn_measure=next_window,
                offset=offset, birth_cycle=state.cycle + 1,
            )
            part.offspring_count += 1
            state.parts.append(child)
        _mutate_part(part, state, rng)
        if child is not None:
            _mutate_part(child, state, rng)

    for part in state.parts:
        part.history.append(part.leitmotif.measures)
    state.cycle += 1
    return state


def therapy_measure_of(params: EngineParams, total_measures: int) -> int:
    return math.floor(params.therapy_start * total_measures)


def _therapy_cycle(state: EngineState) -> int:
    measure = therapy_measure_of(state.params, state.total_measures)
    n = state.params.leitmotif_length_n
    cycle = (measure - state.start) // n + 1
    return max(1, min(state.num_cycles, cycle))


def apply_therapy(state: EngineState, params: EngineParams,
                  rng: random.Random) -> EngineState:
    """Silence each part with probability 1 - survival_rate.

    Killed parts are rested out from the therapy measure onward and stop
    reproducing and mutating; survivors carry on and the tumor regrows.
    """
    measure = therapy_measure_of(params, state.total_measures)
    killed: list[str] = []
    survived: list[str] = []
    for part in state.parts:
        if not part.alive:
            continue
        if rng.random() < params.survival_rate:
            survived.append(part.part_id)
        else:
            part.alive = False
            killed.append(part.part_id)
    state.therapy = TherapyRecord(start_measure=measure, killed=killed,
                                  survived=survived)
    return state


def _part_measure(part: MutantPart, t: int, state: EngineState,
                  timeline: tuple[TimeSignature, ...]) -> Measure:
    """Measure t of a mutant part's output stream."""
    therapy = state.therapy
    if therapy is not None and not part.alive and t >= therapy.start_measure:
        return rest_measure(t, timeline[t])
    birth = part.first_sounding_measure
    if t < birth:
        return rest_measure(t, timeline[t])
    n = len(part.leitmotif)
    repeat_start = birth + ((t - birth) // n) * n
    cycle = (repeat_start - state.start) // n + 1
    snapshot = part.history[cycle - part.birth_cycle]
    return replace(snapshot[(t - birth) % n], index=t)


def materialize(state: EngineState) -> Score:
    """Assemble the output score from the finished engine state."""
    score = state.score
    timeline = score.time_signatures
    founder = state.founder
    founder_slot = next(i for i, p in enumerate(score.parts)
                        if p.id == founder.part_id)

    parts: list[Part] = []
    for i, original in enumerate(score.parts):
        if i != founder_slot:
            parts.append(original)
            continue
        measures = tuple(original.measures[:state.start]) + tuple(
            _part_measure(founder, t, state, timeline)
            for t in range(state.start, state.total_measures)
        )
        parts.append(replace(original, measures=measures))

    for ordinal, mutant in enumerate(state.parts[1:], start=1):
        measures = tuple(_part_measure(mutant, t, state, timeline)
                         for t in range(state.total_measures))
        parts.append(Part(id=mutant.part_id, name=f"Mutant {ordinal}",
                          instrument=score.parts[founder_slot].instrument,
                          measures=measures))

    return Score(parts=tuple(parts), title=score.title,
                 divisions_hint=score.divisions_hint)


def run(score: Score, params: EngineParams) -> tuple[Score, LineageTree]:
    """Run the full simulation; deterministic in (score, params)."""
    rng = random.Random(params.seed)
    state = new_state(score, params, rng)
    therapy_cycle = _therapy_cycle(state) if params.treatment_enabled else None
    for cycle in range(1, state.num_cycles + 1):
        if therapy_cycle == cycle:
            apply_therapy(state, params, rng)
        step_cycle(state, rng)
    output = materialize(state)
    lineage = LineageTree(
        nodes={p.part_id: p for p in state.parts},
        events=list(state.events),
        therapy=state.therapy,
    )
    return output, lineage
