"""GTzan-style dataset ingestion and seeded 3-fold splits.

A dataset root holds one subdirectory per genre, each full of WAV clips.
Splits are made at clip granularity, so every 20 ms segment of a clip lands
in the same set as the clip itself.

The shuffle is pinned so that splits reproduce across implementations:
xorshift64 (shifts 13, >>7, 17; zero seeds replaced by 0x9E3779B97F4A7C15)
driving a Fisher-Yates pass from the last element down, ``j = next() %
(i + 1)``. Clips are shuffled in manifest order, then dealt round-robin into
three sets: set k takes shuffled positions k, k+3, k+6, ... Fold f tests on
set f, validates on set (f+1) % 3 and trains on set (f+2) % 3.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError

log = logging.getLogger(__name__)

GTZAN_GENRES = (
    "blues", "classical", "country", "disco", "hiphop",
    "jazz", "metal", "pop", "reggae", "rock",
)

MANIFEST_HEADER = ("clip_id", "path", "genre", "set_index")

_MASK64 = (1 << 64) - 1
_ZERO_SEED_SUBSTITUTE = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class GenreLabel:
    index: int
    name: str


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    path: Path
    genre: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    genres: tuple[str, ...]

    def __post_init__(self) -> None:
        ids = [e.clip_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InputError(f"duplicate clip_ids in manifest: {dupes[:5]}")
        for e in self.entries:
            if e.genre not in self.genres:
                raise InputError(f"entry {e.clip_id}: unknown genre {e.genre!r}")

    def clip_ids(self) -> list[str]:
        return [e.clip_id for e in self.entries]

    def label_index(self, genre: str) -> int:
        return self.genres.index(genre)

    def labels(self) -> list[GenreLabel]:
        return [GenreLabel(i, g) for i, g in enumerate(self.genres)]

    def entry(self, clip_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.clip_id == clip_id:
                return e
        raise InputError(f"no entry for clip {clip_id!r}")


def scan_dataset(root: str | Path, genres: Sequence[str] | None = None,
                 strict: bool = False) -> DatasetManifest:
    """Walk genre subdirectories and build a manifest.

    ``genres=None`` uses the GTzan label set; pass an explicit ordered list
    for other corpora. Directories outside the label set are skipped with a
    warning, or rejected when ``strict`` is set.
    """
    root = Path(root)
    if not root.is_dir():
        raise InputError(f"dataset root {root} is not a directory")
    genre_list = tuple(genres) if genres is not None else GTZAN_GENRES

    entries = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if sub.name not in genre_list:
            if strict:
                raise InputError(f"unknown genre directory {sub.name!r}")
            log.warning("skipping unknown genre directory %s", sub)
            continue
        for wav in sorted(sub.glob("*.wav")):
            entries.append(ManifestEntry(clip_id=wav.stem, path=wav,
                                         genre=sub.name))
    if not entries:
        raise InputError(f"no WAV files found under {root}")
    return DatasetManifest(entries=tuple(entries), genres=genre_list)


def _xorshift64(x: int) -> int:
    x ^= (x << 13) & _MASK64
    x ^= x >> 7
    x ^= (x << 17) & _MASK64
    return x


def seeded_shuffle(items: Iterable, seed: int) -> list:
    """Fisher-Yates driven by xorshift64; the split reproducibility anchor."""
    out = list(items)
    x = seed & _MASK64
    if x == 0:
        x = _ZERO_SEED_SUBSTITUTE
    for i in range(len(out) - 1, 0, -1):
        x = _xorshift64(x)
        j = x % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


@dataclass(frozen=True)
class FoldAssignment:
    """Three disjoint clip-id sets plus the role rotation over them."""

    seed: int
    sets: tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]

    def role_sets(self, fold: int) -> tuple[tuple[str, ...], ...]:
        """(train, val, test) clip ids for fold 0, 1 or 2."""
        if fold not in (0, 1, 2):
            raise InputError(f"fold must be 0, 1 or 2, got {fold}")
        return (self.sets[(fold + 2) % 3], self.sets[(fold + 1) % 3],
                self.sets[fold])

    def set_index_of(self) -> dict[str, int]:
        return {cid: k for k, ids in enumerate(self.sets) for cid in ids}


def make_folds(manifest: DatasetManifest, seed: int) -> FoldAssignment:
    ids = manifest.clip_ids()
    if len(ids) < 3:
        raise InputError(f"need at least 3 clips for 3 folds, have {len(ids)}")
    shuffled = seeded_shuffle(ids, seed)
    sets = tuple(tuple(shuffled[k::3]) for k in range(3))
    return FoldAssignment(seed=seed, sets=sets)


def two_set_split(assignment: FoldAssignment, fold: int,
                  val_fraction: float = 0.1) -> tuple[tuple[str, ...], ...]:
    """Alternative to the role rotation: train on both non-test sets.

    A seeded slice of the pooled clips (10% by default, at least one clip)
    is held out for validation. Slice seed: assignment seed +
    0x9E3779B97F4A7C15 * (fold + 1), masked to 64 bits.
    """
    train, val, test = assignment.role_sets(fold)
    pool = list(val) + list(train)
    slice_seed = (assignment.seed + _ZERO_SEED_SUBSTITUTE * (fold + 1)) & _MASK64
    shuffled = seeded_shuffle(pool, slice_seed)
    n_val = max(1, round(val_fraction * len(pool)))
    return tuple(shuffled[n_val:]), tuple(shuffled[:n_val]), test


def write_manifest_csv(manifest: DatasetManifest, path: str | Path,
                       assignment: FoldAssignment | None = None) -> None:
    """Persist as `clip_id,path,genre,set_index` (UTF-8, LF endings).

    Paths are stored relative to the CSV location when possible. set_index
    is empty until folds are assigned.
    """
    path = Path(path)
    set_of = assignment.set_index_of() if assignment is not None else {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            try:
                rel = e.path.resolve().relative_to(path.resolve().parent)
            except ValueError:
                rel = e.path.resolve()
            set_index = set_of.get(e.clip_id, "")
            writer.writerow([e.clip_id, rel.as_posix(), e.genre, set_index])


def read_manifest_csv(path: str | Path,
                      genres: Sequence[str] | None = None,
                      ) -> tuple[DatasetManifest, dict[str, int]]:
    """Inverse of write_manifest_csv; also returns clip -> set_index."""
    path = Path(path)
    entries = []
    set_indices: dict[str, int] = {}
    seen_genres: list[str] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_HEADER:
            raise InputError(f"{path}: unexpected manifest header {header}")
        for row in reader:
            clip_id, rel, genre, set_index = row
            p = Path(rel)
            if not p.is_absolute():
                p = path.parent / p
            entries.append(ManifestEntry(clip_id=clip_id, path=p, genre=genre))
            if genre not in seen_genres:
                seen_genres.append(genre)
            if set_index != "":
                set_indices[clip_id] = int(set_index)
    if not entries:
        raise InputError(f"{path}: empty manifest")
    genre_list = tuple(genres) if genres is not None else tuple(sorted(seen_genres))
    return DatasetManifest(entries=tuple(entries), genres=genre_list), set_indices
