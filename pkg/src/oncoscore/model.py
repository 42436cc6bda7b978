"""In-memory representation of a partwise score.

Durations are exact rationals measured in whole notes (a quarter note is
1/4), so repeated halving and summation never lose precision.  All types
are frozen value objects; measures validate on construction that their
event durations sum exactly to the time signature's capacity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple, Optional


class CapacityError(ValueError):
    """Event durations of a measure do not sum to its time signature."""


STEP_SEMITONES = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

# Spelling for each pitch class when normalizing: naturals where possible,
# sharps on the black keys.
_PITCH_CLASS_SPELLING = (
    ("C", 0), ("C", 1), ("D", 0), ("D", 1), ("E", 0), ("F", 0),
    ("F", 1), ("G", 0), ("G", 1), ("A", 0), ("A", 1), ("B", 0),
)

# C0 is the lowest pitch a normalized spelling can reach with octave >= 0.
MIN_CHROMATIC_INDEX = 12
MAX_CHROMATIC_INDEX = 127


@dataclass(frozen=True)
class Pitch:
    """A spelled pitch: letter step, accidental offset and octave.

    The chromatic index follows the MIDI convention (C4 = 60) and must
    land in [0, 127]; pitches outside that range cannot be constructed.
    """

    step: str
    alter: int = 0
    octave: int = 4

    def __post_init__(self) -> None:
        if self.step not in STEP_SEMITONES:
            raise ValueError(f"step must be one of A-G, got {self.step!r}")
        if not -2 <= self.alter <= 2:
            raise ValueError(f"alter must be in [-2, 2], got {self.alter}")
        if not 0 <= self.octave <= 9:
            raise ValueError(f"octave must be in [0, 9], got {self.octave}")
        if not 0 <= self.chromatic_index <= MAX_CHROMATIC_INDEX:
            raise ValueError(
                f"pitch {self.step}{self.alter:+d}/{self.octave} is outside "
                f"the chromatic range [0, {MAX_CHROMATIC_INDEX}]"
            )

    @property
    def chromatic_index(self) -> int:
        return (self.octave + 1) * 12 + STEP_SEMITONES[self.step] + self.alter

    @classmethod
    def from_chromatic_index(cls, index: int) -> "Pitch":
        """Normalized spelling for a chromatic index (sharps, no doubles)."""
        if not MIN_CHROMATIC_INDEX <= index <= MAX_CHROMATIC_INDEX:
            raise ValueError(
                f"chromatic index {index} has no normalized spelling in "
                f"[{MIN_CHROMATIC_INDEX}, {MAX_CHROMATIC_INDEX}]"
            )
        step, alter = _PITCH_CLASS_SPELLING[index % 12]
        return cls(step=step, alter=alter, octave=index // 12 - 1)

    def __str__(self) -> str:
        accidental = {-2: "bb", -1: "b", 0: "", 1: "#", 2: "##"}[self.alter]
        return f"{self.step}{accidental}{self.octave}"


def transpose_pitch(pitch: Pitch, semitones: int) -> Pitch:
    """Shift a pitch by up to an octave in either direction.

    The result is clamped to the representable range and respelled to the
    simplest enharmonic.  Total: never raises for a valid pitch.
    """
    if not -12 <= semitones <= 12:
        raise ValueError(f"semitones must be in [-12, 12], got {semitones}")
    index = pitch.chromatic_index + semitones
    index = max(MIN_CHROMATIC_INDEX, min(MAX_CHROMATIC_INDEX, index))
    return Pitch.from_chromatic_index(index)


@dataclass(frozen=True)
class Duration:
    """Exact length in whole notes.  Quarter note = 1/4."""

    value: Fraction

    def __post_init__(self) -> None:
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))
        if self.value <= 0:
            raise ValueError(f"duration must be positive, got {self.value}")

    def halved(self) -> "Duration":
        return Duration(self.value / 2)

    def __add__(self, other: "Duration") -> "Duration":
        return Duration(self.value + other.value)

    def __str__(self) -> str:
        return str(self.value)


WHOLE = Duration(Fraction(1))
HALF = Duration(Fraction(1, 2))
QUARTER = Duration(Fraction(1, 4))
EIGHTH = Duration(Fraction(1, 8))
SIXTEENTH = Duration(Fraction(1, 16))


@dataclass(frozen=True)
class NoteEvent:
    """One rhythmic slot: a rest, a single note, or a chord.

    The kind is implied by the pitch count: empty means rest, one means
    note, two or more distinct pitches mean chord.
    """

    pitches: tuple[Pitch, ...]
    duration: Duration
    tie_start: bool = False
    tie_stop: bool = False

    def __post_init__(self) -> None:
        if len(set(self.pitches)) != len(self.pitches):
            raise ValueError("chord pitches must be distinct")
        if not self.pitches and (self.tie_start or self.tie_stop):
            raise ValueError("a rest cannot carry ties")

    @classmethod
    def rest(cls, duration: Duration) -> "NoteEvent":
        return cls(pitches=(), duration=duration)

    @classmethod
    def note(cls, pitch: Pitch, duration: Duration, **ties: bool) -> "NoteEvent":
        return cls(pitches=(pitch,), duration=duration, **ties)

    @classmethod
    def chord(cls, pitches: tuple[Pitch, ...], duration: Duration, **ties: bool) -> "NoteEvent":
        if len(pitches) < 2:
            raise ValueError("a chord needs at least two pitches")
        return cls(pitches=pitches, duration=duration, **ties)

    @property
    def kind(self) -> str:
        if not self.pitches:
            return "rest"
        return "note" if len(self.pitches) == 1 else "chord"

    @property
    def is_rest(self) -> bool:
        return not self.pitches

    def without_ties(self) -> "NoteEvent":
        if self.tie_start or self.tie_stop:
            return replace(self, tie_start=False, tie_stop=False)
        return self


class TimeSignature(NamedTuple):
    beats: int
    beat_unit: int

    def capacity(self) -> Fraction:
        return Fraction(self.beats, self.beat_unit)


@dataclass(frozen=True)
class Measure:
    """A fixed-capacity container of events.

    Constructing a measure whose durations do not sum exactly to the
    time signature's capacity raises CapacityError, so every measure in
    circulation is conserved by construction.
    """

    index: int
    events: tuple[NoteEvent, ...]
    time_signature: TimeSignature

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"measure index must be >= 0, got {self.index}")
        total = sum((e.duration.value for e in self.events), Fraction(0))
        if total != self.time_signature.capacity():
            raise CapacityError(
                f"measure {self.index}: events sum to {total}, expected "
                f"{self.time_signature.capacity()} for "
                f"{self.time_signature.beats}/{self.time_signature.beat_unit}"
            )


def measure_capacity(measure: Measure) -> Duration:
    """Total duration the measure's time signature allows."""
    return Duration(measure.time_signature.capacity())


def rest_measure(index: int, time_signature: TimeSignature) -> Measure:
    """A measure holding a single rest that fills the whole capacity."""
    rest = NoteEvent.rest(Duration(time_signature.capacity()))
    return Measure(index=index, events=(rest,), time_signature=time_signature)


@dataclass(frozen=True)
class Part:
    id: str
    name: str
    instrument: str
    measures: tuple[Measure, ...]

    def __post_init__(self) -> None:
        for position, measure in enumerate(self.measures):
            if measure.index != position:
                raise ValueError(
                    f"part {self.id!r}: measure at position {position} has "
                    f"index {measure.index}; indices must be contiguous from 0"
                )


@dataclass(frozen=True)
class Score:
    """A partwise score whose parts share one time-signature timeline."""

    parts: tuple[Part, ...]
    title: Optional[str] = None
    divisions_hint: int = 1

    def __post_init__(self) -> None:
        if not self.parts:
            raise ValueError("a score needs at least one part")
        if self.divisions_hint < 1:
            raise ValueError("divisions_hint must be positive")
        ids = [p.id for p in self.parts]
        if len(set(ids)) != len(ids):
            raise ValueError(f"part ids must be unique, got {ids}")
        counts = {len(p.measures) for p in self.parts}
        if len(counts) != 1:
            raise ValueError(f"parts have unequal measure counts: {sorted(counts)}")
        timeline = self.time_signatures
        for part in self.parts[1:]:
            for measure in part.measures:
                if measure.time_signature != timeline[measure.index]:
                    raise ValueError(
                        f"part {part.id!r} measure {measure.index} has time "
                        f"signature {measure.time_signature}, but the score "
                        f"timeline says {timeline[measure.index]}"
                    )

    @property
    def measure_count(self) -> int:
        return len(self.parts[0].measures)

    @property
    def time_signatures(self) -> tuple[TimeSignature, ...]:
        return tuple(m.time_signature for m in self.parts[0].measures)

    def structurally_equal(self, other: "Score") -> bool:
        """Equality on musical content; serialization hints are ignored."""
        return self.parts == other.parts and self.title == other.title
