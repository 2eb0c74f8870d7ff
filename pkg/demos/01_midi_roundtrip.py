"""
MIDI I/O basics
===============

Build a small file by hand, serialize it canonically, and parse it back.
"""

from emomusic.midi import (
    EndOfTrack,
    MidiFile,
    MidiTrack,
    NoteOff,
    NoteOn,
    SetTempo,
    parse_midi,
    write_midi,
)

# a one-bar C-major arpeggio at 140 BPM, 480 ticks per quarter:
# each note is NoteOn immediately after the previous NoteOff
track = MidiTrack([(0, SetTempo(round(60_000_000 / 140)))])
for pitch in [60, 64, 67, 72]:
    track.events.append((0, NoteOn(0, pitch, 96)))
    track.events.append((480, NoteOff(0, pitch, 0)))
track.events.append((0, EndOfTrack()))

midi = MidiFile(format=0, division=480, tracks=[track])
raw = write_midi(midi)
print(f"serialized {len(raw)} bytes")

# the writer is canonical: parse -> write reproduces identical bytes
again = write_midi(parse_midi(raw))
print("byte-identical after round trip:", raw == again)

parsed = parse_midi(raw)
for delta, event in parsed.tracks[0].events:
    print(f"  delta {delta:4d}  {event}")
