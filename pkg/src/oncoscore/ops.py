"""The five mutation operators applied to a leitmotif.

Each operator is a pure function of (input, RNG draws).  A draw is one
``rng.random()`` call; integer choices map a draw u to ``int(u * n)``.
Operators that cannot apply (for example an all-rest measure) consume
exactly as many draws as a successful application and return the input
unchanged together with an event flagged as skipped, so the draw stream
never depends on whether an application succeeded.

Draws per operator: insertion, deletion, inversion and transposition use
two; translocation uses one.

Events record enough detail to replay the application without an RNG;
see ``replay_event``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Protocol

from .model import Measure, NoteEvent, Score, transpose_pitch


class RandomSource(Protocol):
    def random(self) -> float: ...


INSERTION = "insertion"
INVERSION = "inversion"
DELETION = "deletion"
TRANSLOCATION = "translocation"
TRANSPOSITION = "transposition"

MUTATION_KINDS = (INSERTION, INVERSION, DELETION, TRANSLOCATION, TRANSPOSITION)


@dataclass(frozen=True)
class Leitmotif:
    """The measures that repeat in place of a part progressing.

    ``source_part`` and ``source_start`` locate where in the original
    piece the theme was cut from.
    """

    measures: tuple[Measure, ...]
    source_part: str
    source_start: int

    def __post_init__(self) -> None:
        if not self.measures:
            raise ValueError("a leitmotif needs at least one measure")

    def __len__(self) -> int:
        return len(self.measures)


@dataclass(frozen=True)
class MutationEvent:
    """One operator application, replayable from its detail fields."""

    kind: str
    part: str
    measure_index: int
    cycle: int
    detail: dict

    @property
    def skipped(self) -> bool:
        return bool(self.detail.get("skipped"))


def draw_index(rng: RandomSource, n: int) -> int:
    """Uniform integer in [0, n) from a single draw."""
    return min(int(rng.random() * n), n - 1)


def draw_semitones(rng: RandomSource) -> int:
    """Uniform over the 24 non-zero shifts in [-12, +12]."""
    i = draw_index(rng, 24)
    return i - 12 if i < 12 else i - 11


def _skip(rng: RandomSource, draws: int, kind: str, reason: str,
          part: str, measure_index: int, cycle: int) -> MutationEvent:
    for _ in range(draws):
        rng.random()
    return MutationEvent(kind=kind, part=part, measure_index=measure_index,
                         cycle=cycle, detail={"skipped": True, "reason": reason})


def _note_positions(measure: Measure) -> list[int]:
    return [i for i, event in enumerate(measure.events) if not event.is_rest]


def _note_span(measure: Measure, rng: RandomSource) -> tuple[int, int]:
    """Contiguous all-note span: uniform start among notes, then length."""
    positions = _note_positions(measure)
    start = positions[draw_index(rng, len(positions))]
    run_length = 0
    for event in measure.events[start:]:
        if event.is_rest:
            break
        run_length += 1
    length = 1 + draw_index(rng, run_length)
    return start, length


def op_insertion(measure: Measure, rng: RandomSource, *, part: str = "",
                 measure_index: int = 0, cycle: int = 0
                 ) -> tuple[Measure, MutationEvent]:
    """Halve a span of notes and repeat it in place.

    A span A B C becomes A B C A B C at half the durations, keeping the
    measure's total duration unchanged.
    """
    if not _note_positions(measure):
        return measure, _skip(rng, 2, INSERTION, "measure has no notes",
                              part, measure_index, cycle)
    start, length = _note_span(measure, rng)
    span = tuple(e.without_ties() for e in measure.events[start:start + length])
    halved = tuple(replace(e, duration=e.duration.halved()) for e in span)
    events = (measure.events[:start] + halved + halved
              + measure.events[start + length:])
    mutated = replace(measure, events=events)
    detail = {"span_start": start, "span_length": length}
    return mutated, MutationEvent(INSERTION, part, measure_index, cycle, detail)


def op_inversion(measure: Measure, rng: RandomSource, *, part: str = "",
                 measure_index: int = 0, cycle: int = 0
                 ) -> tuple[Measure, MutationEvent]:
    """Reverse the order of a span of events, each event kept intact."""
    if len(measure.events) < 2:
        return measure, _skip(rng, 2, INVERSION, "fewer than two events",
                              part, measure_index, cycle)
    start = draw_index(rng, len(measure.events))
    length = 1 + draw_index(rng, len(measure.events) - start)
    span = measure.events[start:start + length]
    events = (measure.events[:start] + tuple(reversed(span))
              + measure.events[start + length:])
    mutated = replace(measure, events=events)
    detail = {"span_start": start, "span_length": length}
    return mutated, MutationEvent(INVERSION, part, measure_index, cycle, detail)


def op_deletion(measure: Measure, rng: RandomSource, *, part: str = "",
                measure_index: int = 0, cycle: int = 0
                ) -> tuple[Measure, MutationEvent]:
    """Replace a span of notes with rests of identical durations."""
    if not _note_positions(measure):
        return measure, _skip(rng, 2, DELETION, "measure has no notes",
                              part, measure_index, cycle)
    start, length = _note_span(measure, rng)
    rests = tuple(NoteEvent.rest(e.duration)
                  for e in measure.events[start:start + length])
    events = measure.events[:start] + rests + measure.events[start + length:]
    mutated = replace(measure, events=events)
    detail = {"span_start": start, "span_length": length}
    return mutated, MutationEvent(DELETION, part, measure_index, cycle, detail)


def eligible_donors(leitmotif: Leitmotif, measure_index: int,
                    donor: Score) -> list[tuple[str, int]]:
    """(part id, measure index) pairs that may replace the target measure.

    A donor must carry the target's time signature and lie outside the
    leitmotif's own source region.
    """
    target_ts = leitmotif.measures[measure_index].time_signature
    excluded = range(leitmotif.source_start,
                     leitmotif.source_start + len(leitmotif))
    return [
        (part.id, j)
        for part in donor.parts
        for j in range(len(part.measures))
        if part.measures[j].time_signature == target_ts
        and not (part.id == leitmotif.source_part and j in excluded)
    ]


def op_translocation(leitmotif: Leitmotif, measure_index: int, donor: Score,
                     rng: RandomSource, *, part: str = "", cycle: int = 0
                     ) -> tuple[Measure, MutationEvent]:
    """Replace a leitmotif measure with a random measure from the piece."""
    candidates = eligible_donors(leitmotif, measure_index, donor)
    if not candidates:
        return leitmotif.measures[measure_index], _skip(
            rng, 1, TRANSLOCATION, "no donor measure with a matching time signature",
            part, measure_index, cycle,
        )
    donor_part, donor_index = candidates[draw_index(rng, len(candidates))]
    source = next(p for p in donor.parts if p.id == donor_part)
    mutated = replace(source.measures[donor_index], index=measure_index)
    detail = {"donor_part": donor_part, "donor_measure": donor_index}
    return mutated, MutationEvent(TRANSLOCATION, part, measure_index, cycle, detail)


def _transpose_event(event: NoteEvent, semitones: int) -> NoteEvent:
    shifted = []
    for pitch in event.pitches:
        moved = transpose_pitch(pitch, semitones)
        if moved not in shifted:  # clamping can collapse chord tones
            shifted.append(moved)
    return NoteEvent(pitches=tuple(shifted), duration=event.duration)


def op_transposition(measure: Measure, rng: RandomSource, *, part: str = "",
                     measure_index: int = 0, cycle: int = 0
                     ) -> tuple[Measure, MutationEvent]:
    """Shift the pitch of one note (or whole chord) by a random interval.

    The interval is uniform over the 24 half-step shifts within an octave,
    zero excluded.
    """
    positions = _note_positions(measure)
    if not positions:
        return measure, _skip(rng, 2, TRANSPOSITION, "measure has no notes",
                              part, measure_index, cycle)
    event_index = positions[draw_index(rng, len(positions))]
    semitones = draw_semitones(rng)
    events = list(measure.events)
    events[event_index] = _transpose_event(events[event_index], semitones)
    mutated = replace(measure, events=tuple(events))
    detail = {"event_index": event_index, "semitones": semitones}
    return mutated, MutationEvent(TRANSPOSITION, part, measure_index, cycle, detail)


def replay_event(measure: Measure, event: MutationEvent,
                 donor: Score | None = None) -> Measure:
    """Reapply a recorded event to its pre-state without an RNG.

    Translocation replay needs the donor score the event drew from.
    """
    if event.skipped:
        return measure
    detail = event.detail
    if event.kind == INSERTION:
        start, length = detail["span_start"], detail["span_length"]
        span = tuple(e.without_ties() for e in measure.events[start:start + length])
        halved = tuple(replace(e, duration=e.duration.halved()) for e in span)
        events = (measure.events[:start] + halved + halved
                  + measure.events[start + length:])
        return replace(measure, events=events)
    if event.kind == INVERSION:
        start, length = detail["span_start"], detail["span_length"]
        span = measure.events[start:start + length]
        events = (measure.events[:start] + tuple(reversed(span))
                  + measure.events[start + length:])
        return replace(measure, events=events)
    if event.kind == DELETION:
        start, length = detail["span_start"], detail["span_length"]
        rests = tuple(NoteEvent.rest(e.duration)
                      for e in measure.events[start:start + length])
        events = measure.events[:start] + rests + measure.events[start + length:]
        return replace(measure, events=events)
    if event.kind == TRANSLOCATION:
        if donor is None:
            raise ValueError("translocation replay needs the donor score")
        source = next(p for p in donor.parts if p.id == detail["donor_part"])
        return replace(source.measures[detail["donor_measure"]],
                       index=measure.index)
    if event.kind == TRANSPOSITION:
        events = list(measure.events)
        events[detail["event_index"]] = _transpose_event(
            events[detail["event_index"]], detail["semitones"]
        )
        return replace(measure, events=tuple(events))
    raise ValueError(f"unknown mutation kind {event.kind!r}")
