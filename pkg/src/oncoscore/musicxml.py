"""Read and write a subset of uncompressed partwise MusicXML.

Supported: the part list, measures, time signatures, divisions, notes,
rests, chords and ties.  Everything else is dropped and tallied in the
parse diagnostics.  Compressed (.mxl) archives and timewise layouts are
rejected outright.

Serialization is deterministic: the same Score always produces the same
bytes, with per-part divisions re-derived as the least common multiple
of the duration denominators.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .model import (
    CapacityError,
    Duration,
    Measure,
    NoteEvent,
    Part,
    Pitch,
    Score,
    TimeSignature,
)

MUSICXML_VERSION = "3.1"
DOCTYPE = (
    '<!DOCTYPE score-partwise PUBLIC "-//Recordare//DTD MusicXML 3.1 '
    'Partwise//EN" "http://www.musicxml.org/dtds/partwise.dtd">'
)

# Divisions beyond this bound are not serializable.
MAX_DIVISIONS = 2**24

_ZIP_MAGIC = b"PK"


class MusicXMLError(Exception):
    """Base class for MusicXML reading and writing failures."""


class MusicXMLParseError(MusicXMLError):
    """The input is not well-formed XML."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class UnsupportedFormatError(MusicXMLError):
    """Well-formed input outside the supported MusicXML subset."""


class ValidationError(MusicXMLError):
    """Parsed content violates a score invariant."""

    def __init__(self, message: str, part_id: str | None = None,
                 measure_index: int | None = None):
        location = ""
        if part_id is not None:
            location = f" (part {part_id}"
            if measure_index is not None:
                location += f", measure {measure_index}"
            location += ")"
        super().__init__(message + location)
        self.part_id = part_id
        self.measure_index = measure_index


class SerializationError(MusicXMLError):
    """The score cannot be expressed with integer divisions."""


@dataclass
class ParseDiagnostics:
    """What the parser dropped or papered over.

    Every element that does not contribute to the Score model is counted
    in ``skipped_elements``, once per occurrence of its subtree root.
    """

    warnings: list[tuple[str, str]] = field(default_factory=list)
    skipped_elements: Counter = field(default_factory=Counter)

    def warn(self, location: str, message: str) -> None:
        self.warnings.append((location, message))

    def skip(self, element_name: str) -> None:
        self.skipped_elements[element_name] += 1


def _byte_offset(data: bytes, lineno: int, column: int) -> int:
    lines = data.split(b"\n")
    return sum(len(line) + 1 for line in lines[: lineno - 1]) + column


def _text(element: ET.Element | None) -> str | None:
    if element is None or element.text is None:
        return None
    return element.text.strip()


_NOTE_IGNORED = {
    "type", "voice", "stem", "beam", "dot", "accidental", "lyric",
    "instrument", "staff", "notehead", "time-modification",
}


class _NoteOutcome:
    """One parsed <note>: either a fresh event, a chord member, or nothing."""

    __slots__ = ("event", "is_chord_member", "duration")

    def __init__(self, event: NoteEvent | None, is_chord_member: bool,
                 duration: Fraction | None):
        self.event = event
        self.is_chord_member = is_chord_member
        self.duration = duration


def _parse_note(note: ET.Element, divisions: int, location: str,
                part_id: str, measure_index: int,
                diagnostics: ParseDiagnostics) -> _NoteOutcome | None:
    pitch: Pitch | None = None
    is_rest = False
    is_chord_member = False
    duration_divs: int | None = None
    tie_start = False
    tie_stop = False

    for child in note:
        tag = child.tag
        if tag in ("grace", "cue"):
            diagnostics.skip(tag)
            diagnostics.warn(location, f"{tag} note dropped")
            return None
        if tag == "chord":
            is_chord_member = True
        elif tag == "rest":
            is_rest = True
        elif tag == "pitch":
            step = _text(child.find("step"))
            octave = _text(child.find("octave"))
            alter = _text(child.find("alter"))
            if step is None or octave is None:
                raise ValidationError("note pitch is missing step or octave",
                                      part_id, measure_index)
            try:
                pitch = Pitch(step=step, alter=int(alter or 0), octave=int(octave))
            except ValueError as exc:
                raise ValidationError(f"invalid pitch: {exc}",
                                      part_id, measure_index) from exc
        elif tag == "duration":
            text = _text(child)
            if text is None or not text.isdigit():
                raise ValidationError("note duration is not a positive integer",
                                      part_id, measure_index)
            duration_divs = int(text)
        elif tag == "tie":
            kind = child.get("type")
            if kind == "start":
                tie_start = True
            elif kind == "stop":
                tie_stop = True
        elif tag == "notations":
            for notation in child:
                if notation.tag == "tied":
                    continue  # redundant with <tie>
                diagnostics.skip(notation.tag)
        elif tag in _NOTE_IGNORED:
            diagnostics.skip(tag)
        else:
            diagnostics.skip(tag)

    if duration_divs is None or duration_divs <= 0:
        raise ValidationError("note has no usable duration",
                              part_id, measure_index)
    whole_notes = Fraction(duration_divs, divisions * 4)

    if is_rest:
        return _NoteOutcome(NoteEvent.rest(Duration(whole_notes)), False, whole_notes)
    if pitch is None:
        raise ValidationError("note has neither pitch nor rest",
                              part_id, measure_index)
    event = NoteEvent(pitches=(pitch,), duration=Duration(whole_notes),
                      tie_start=tie_start, tie_stop=tie_stop)
    return _NoteOutcome(event, is_chord_member, whole_notes)


def _merge_chord_member(previous: NoteEvent, member: NoteEvent, location: str,
                        diagnostics: ParseDiagnostics) -> NoteEvent:
    if member.duration != previous.duration:
        diagnostics.warn(location, "chord member duration differs; keeping the first")
    pitches = previous.pitches
    new_pitch = member.pitches[0]
    if new_pitch in pitches:
        diagnostics.warn(location, f"duplicate chord pitch {new_pitch} dropped")
    else:
        pitches = pitches + (new_pitch,)
    return NoteEvent(
        pitches=pitches,
        duration=previous.duration,
        tie_start=previous.tie_start or member.tie_start,
        tie_stop=previous.tie_stop or member.tie_stop,
    )


def _parse_measure(measure_el: ET.Element, part_id: str, index: int,
                   divisions: int, time_signature: TimeSignature | None,
                   diagnostics: ParseDiagnostics
                   ) -> tuple[Measure, int, TimeSignature]:
    location = f"part {part_id}, measure {index}"
    events: list[NoteEvent] = []

    for child in measure_el:
        tag = child.tag
        if tag == "attributes":
            for attr in child:
                if attr.tag == "divisions":
                    text = _text(attr)
                    if text is None or not text.isdigit() or int(text) < 1:
                        raise ValidationError("divisions must be a positive integer",
                                              part_id, index)
                    divisions = int(text)
                elif attr.tag == "time":
                    beats = _text(attr.find("beats"))
                    beat_type = _text(attr.find("beat-type"))
                    if beats is None or beat_type is None:
                        raise ValidationError("time signature missing beats or beat-type",
                                              part_id, index)
                    time_signature = TimeSignature(int(beats), int(beat_type))
                else:
                    diagnostics.skip(attr.tag)
        elif tag == "note":
            outcome = _parse_note(child, divisions, location, part_id, index,
                                  diagnostics)
            if outcome is None:
                continue
            if outcome.is_chord_member:
                if not events or events[-1].is_rest:
                    diagnostics.warn(location, "chord flag without a preceding note; "
                                               "treated as a separate note")
                    events.append(outcome.event)
                else:
                    events[-1] = _merge_chord_member(events[-1], outcome.event,
                                                     location, diagnostics)
            else:
                events.append(outcome.event)
        elif tag in ("backup", "forward"):
            raise UnsupportedFormatError(
                f"<{tag}> in {location}: multiple voices per staff are not supported"
            )
        else:
            if tag == "print":
                diagnostics.warn(location, "layout directives dropped")
            diagnostics.skip(tag)

    if time_signature is None:
        raise ValidationError("no time signature in effect", part_id, index)

    capacity = time_signature.capacity()
    total = sum((e.duration.value for e in events), Fraction(0))
    if total > capacity:
        raise ValidationError(
            f"events sum to {total}, exceeding the {time_signature.beats}/"
            f"{time_signature.beat_unit} capacity of {capacity}",
            part_id, index,
        )
    if total < capacity:
        diagnostics.warn(location, f"underfull measure padded with a rest "
                                   f"({total} of {capacity})")
        events.append(NoteEvent.rest(Duration(capacity - total)))

    try:
        measure = Measure(index=index, events=tuple(events),
                          time_signature=time_signature)
    except CapacityError as exc:  # unreachable given the checks above
        raise ValidationError(str(exc), part_id, index) from exc
    return measure, divisions, time_signature


def _parse_part_list(root: ET.Element, diagnostics: ParseDiagnostics
                     ) -> dict[str, tuple[str, str]]:
    """Map part id -> (name, instrument) from <part-list>."""
    entries: dict[str, tuple[str, str]] = {}
    part_list = root.find("part-list")
    if part_list is None:
        diagnostics.warn("score", "missing part-list; using part ids as names")
        return entries
    for child in part_list:
        if child.tag != "score-part":
            diagnostics.skip(child.tag)
            continue
        part_id = child.get("id")
        if part_id is None:
            raise ValidationError("score-part without an id attribute")
        name = _text(child.find("part-name")) or part_id
        instrument = _text(child.find("score-instrument/instrument-name")) or ""
        entries[part_id] = (name, instrument)
        for sub in child:
            if sub.tag not in ("part-name", "score-instrument"):
                diagnostics.skip(sub.tag)
    return entries


def parse_score(xml_bytes: bytes) -> tuple[Score, ParseDiagnostics]:
    """Parse uncompressed partwise MusicXML into a Score.

    Raises MusicXMLParseError for malformed XML, UnsupportedFormatError
    for compressed or timewise input, and ValidationError when measure
    contents break the model invariants.
    """
    if xml_bytes[:2] == _ZIP_MAGIC:
        raise UnsupportedFormatError(
            "compressed MusicXML (.mxl) is not supported; "
            "unpack it to .musicxml first"
        )
    diagnostics = ParseDiagnostics()
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        lineno, column = exc.position
        raise MusicXMLParseError(
            f"malformed XML: {exc.msg}",
            _byte_offset(xml_bytes, lineno, column),
        ) from None

    if root.tag != "score-partwise":
        extra = " (timewise layout; convert to partwise)" if root.tag == "score-timewise" else ""
        raise UnsupportedFormatError(
            f"expected a score-partwise document, got <{root.tag}>{extra}"
        )
    version = root.get("version")
    if version is not None and not version.startswith("3."):
        diagnostics.warn("score", f"MusicXML version {version} is untested; "
                                  "parsing as 3.x")

    title = _text(root.find("work/work-title"))
    if title is None:
        title = _text(root.find("movement-title"))

    listed = _parse_part_list(root, diagnostics)
    for child in root:
        if child.tag in ("part-list", "part", "work", "movement-title"):
            continue
        diagnostics.skip(child.tag)

    parts: list[Part] = []
    divisions_hint: int | None = None
    seen_ids: set[str] = set()
    for part_el in root.findall("part"):
        part_id = part_el.get("id")
        if part_id is None:
            raise ValidationError("part without an id attribute")
        if part_id in seen_ids:
            raise ValidationError(f"duplicate part id {part_id!r}")
        seen_ids.add(part_id)
        name, instrument = listed.get(part_id, (part_id, ""))
        if part_id not in listed:
            diagnostics.warn(f"part {part_id}", "not declared in part-list")

        divisions = 1
        divisions_declared = False
        time_signature: TimeSignature | None = None
        measures: list[Measure] = []
        for index, measure_el in enumerate(part_el.findall("measure")):
            if not divisions_declared and measure_el.find("attributes/divisions") is not None:
                divisions_declared = True
            measure, divisions, time_signature = _parse_measure(
                measure_el, part_id, index, divisions, time_signature, diagnostics
            )
            if divisions_hint is None and divisions_declared:
                divisions_hint = divisions
            measures.append(measure)
        if not measures:
            raise ValidationError("part has no measures", part_id)
        parts.append(Part(id=part_id, name=name, instrument=instrument,
                          measures=tuple(measures)))

    for part_id in listed:
        if part_id not in seen_ids:
            diagnostics.warn(f"part {part_id}", "declared in part-list but has no music")

    if not parts:
        raise ValidationError("score contains no parts")
    try:
        score = Score(parts=tuple(parts), title=title,
                      divisions_hint=divisions_hint or 1)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return score, diagnostics


_TYPE_BY_VALUE = {
    Fraction(2): "breve",
    Fraction(1): "whole",
    Fraction(1, 2): "half",
    Fraction(1, 4): "quarter",
    Fraction(1, 8): "eighth",
    Fraction(1, 16): "16th",
    Fraction(1, 32): "32nd",
    Fraction(1, 64): "64th",
}


def _note_type(value: Fraction) -> tuple[str, int] | None:
    """(type name, dot count) when the duration is a plain or dotted value."""
    if value in _TYPE_BY_VALUE:
        return _TYPE_BY_VALUE[value], 0
    dotted = value / Fraction(3, 2)
    if dotted in _TYPE_BY_VALUE:
        return _TYPE_BY_VALUE[dotted], 1
    return None


def _part_divisions(part: Part) -> int:
    divisions = 1
    for measure in part.measures:
        for event in measure.events:
            value = event.duration.value
            if value.denominator > MAX_DIVISIONS:
                raise SerializationError(
                    f"part {part.id!r}, measure {measure.index}: duration "
                    f"{value} has a denominator beyond {MAX_DIVISIONS}"
                )
            quarters = value * 4
            divisions = math.lcm(divisions, quarters.denominator)
    if divisions > MAX_DIVISIONS:
        raise SerializationError(
            f"part {part.id!r} needs divisions={divisions}, beyond the "
            f"serializable bound of {MAX_DIVISIONS}"
        )
    return divisions


def _write_event(measure_el: ET.Element, event: NoteEvent, divisions: int) -> None:
    duration_divs = event.duration.value * 4 * divisions
    assert duration_divs.denominator == 1
    type_info = _note_type(event.duration.value)

    if event.is_rest:
        note_el = ET.SubElement(measure_el, "note")
        ET.SubElement(note_el, "rest")
        ET.SubElement(note_el, "duration").text = str(duration_divs.numerator)
        if type_info:
            _write_type(note_el, type_info)
        return

    for position, pitch in enumerate(event.pitches):
        note_el = ET.SubElement(measure_el, "note")
        if position > 0:
            ET.SubElement(note_el, "chord")
        pitch_el = ET.SubElement(note_el, "pitch")
        ET.SubElement(pitch_el, "step").text = pitch.step
        if pitch.alter != 0:
            ET.SubElement(pitch_el, "alter").text = str(pitch.alter)
        ET.SubElement(pitch_el, "octave").text = str(pitch.octave)
        ET.SubElement(note_el, "duration").text = str(duration_divs.numerator)
        if event.tie_stop:
            ET.SubElement(note_el, "tie", type="stop")
        if event.tie_start:
            ET.SubElement(note_el, "tie", type="start")
        if type_info:
            _write_type(note_el, type_info)
        if event.tie_start or event.tie_stop:
            notations = ET.SubElement(note_el, "notations")
            if event.tie_stop:
                ET.SubElement(notations, "tied", type="stop")
            if event.tie_start:
                ET.SubElement(notations, "tied", type="start")


def _write_type(note_el: ET.Element, type_info: tuple[str, int]) -> None:
    name, dots = type_info
    ET.SubElement(note_el, "type").text = name
    for _ in range(dots):
        ET.SubElement(note_el, "dot")


def write_score(score: Score) -> bytes:
    """Serialize a Score to deterministic partwise MusicXML bytes.

    Identical scores yield byte-identical documents: elements are emitted
    in a fixed order and divisions are derived from the durations alone.
    """
    root = ET.Element("score-partwise", version=MUSICXML_VERSION)
    if score.title is not None:
        work = ET.SubElement(root, "work")
        ET.SubElement(work, "work-title").text = score.title

    part_list = ET.SubElement(root, "part-list")
    for part in score.parts:
        score_part = ET.SubElement(part_list, "score-part", id=part.id)
        ET.SubElement(score_part, "part-name").text = part.name
        if part.instrument:
            instr = ET.SubElement(score_part, "score-instrument",
                                  id=f"{part.id}-I1")
            ET.SubElement(instr, "instrument-name").text = part.instrument

    for part in score.parts:
        divisions = _part_divisions(part)
        part_el = ET.SubElement(root, "part", id=part.id)
        previous_ts: TimeSignature | None = None
        for measure in part.measures:
            measure_el = ET.SubElement(part_el, "measure",
                                       number=str(measure.index + 1))
            ts = measure.time_signature
            if measure.index == 0 or ts != previous_ts:
                attributes = ET.SubElement(measure_el, "attributes")
                if measure.index == 0:
                    ET.SubElement(attributes, "divisions").text = str(divisions)
                time_el = ET.SubElement(attributes, "time")
                ET.SubElement(time_el, "beats").text = str(ts.beats)
                ET.SubElement(time_el, "beat-type").text = str(ts.beat_unit)
            previous_ts = ts
            for event in measure.events:
                _write_event(measure_el, event, divisions)

    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode")
    document = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f"{DOCTYPE}\n"
        f"{body}\n"
    )
    return document.encode("utf-8")
