"""Sync-format ingestion, bi-allelization and result/export writers.

A sync file is tab-separated text: chromosome, position, reference base,
then one column per sequenced population holding colon-separated counts
of A:T:C:G:N:deletion.  The sync format itself carries no layout, so a
run manifest declares what each column is: one ``replicate,generation,
model`` line per column, in column order.

Reading is streaming (one record at a time); the scan pipeline batches
records into chunks before testing.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import SyncParseError
from .tables import LocusFlag, flag_names
from .variances import SamplingModel

__all__ = [
    "SyncRecord",
    "ManifestColumn",
    "parse_sync",
    "read_manifest",
    "write_manifest",
    "column_layout",
    "biallelize_chunk",
    "write_results",
    "write_sync",
    "write_truth",
    "read_truth",
]

BASES = "ATCG"
_FIELDS = 6  # A, T, C, G, N, deletion


@dataclass(frozen=True)
class SyncRecord:
    chrom: str
    position: int
    ref: str
    counts: np.ndarray  # (n_columns, 6) non-negative ints


def parse_sync(stream, on_error="fail") -> Iterator[SyncRecord]:
    """Stream records from a sync file.

    ``on_error='fail'`` raises :class:`SyncParseError` with the line
    number; ``'skip'`` logs the line to stderr and continues.  The
    column count of the first record is enforced for the whole file.
    """
    if on_error not in ("fail", "skip"):
        raise ValueError("on_error must be 'fail' or 'skip'")
    n_columns = None
    for line_number, line in enumerate(stream, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line or line.startswith("#"):
            continue
        try:
            fields = line.split("\t")
            if len(fields) < 4:
                raise SyncParseError(line_number, "expected at least 4 columns")
            chrom, pos_text, ref = fields[0], fields[1], fields[2]
            try:
                position = int(pos_text)
            except ValueError:
                raise SyncParseError(line_number, f"bad position {pos_text!r}")
            if position < 1:
                raise SyncParseError(line_number, "position must be >= 1")
            if ref not in "ATCGN":
                raise SyncParseError(line_number, f"bad reference base {ref!r}")
            cols = fields[3:]
            if n_columns is None:
                n_columns = len(cols)
            elif len(cols) != n_columns:
                raise SyncParseError(
                    line_number,
                    f"expected {n_columns} count columns, found {len(cols)}")
            counts = np.empty((len(cols), _FIELDS), dtype=np.int64)
            for j, col in enumerate(cols):
                parts = col.split(":")
                if len(parts) != _FIELDS:
                    raise SyncParseError(
                        line_number, f"count field {j + 1} has {len(parts)} "
                        f"values, expected {_FIELDS}")
                try:
                    counts[j] = [int(v) for v in parts]
                except ValueError:
                    raise SyncParseError(line_number, f"non-integer count in "
                                         f"field {j + 1}")
            if np.any(counts < 0):
                raise SyncParseError(line_number, "negative count")
        except SyncParseError as exc:
            if on_error == "fail":
                raise
            print(f"driftscan: skipping malformed sync {exc}", file=sys.stderr)
            continue
        yield SyncRecord(chrom, position, ref, counts)


@dataclass(frozen=True)
class ManifestColumn:
    replicate: int
    generation: int
    model: SamplingModel


def read_manifest(source) -> list[ManifestColumn]:
    """Parse a run manifest: one 'replicate,generation,model' line per column."""
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return read_manifest(fh)
    columns = []
    for line_number, line in enumerate(source, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ValueError(f"manifest line {line_number}: expected "
                             "'replicate,generation,model'")
        try:
            rep, gen = int(parts[0]), int(parts[1])
            model = SamplingModel(parts[2])
        except ValueError as exc:
            raise ValueError(f"manifest line {line_number}: {exc}") from None
        if rep < 1 or gen < 0:
            raise ValueError(f"manifest line {line_number}: replicate must be "
                             ">= 1 and generation >= 0")
        columns.append(ManifestColumn(rep, gen, model))
    if not columns:
        raise ValueError("manifest declares no columns")
    return columns


def write_manifest(path, replicates: int, times: Sequence[int],
                   models: Sequence[SamplingModel]):
    """Write a manifest for a replicate-major column layout."""
    if len(models) != len(times):
        raise ValueError("need one model per time point")
    with open(path, "w", encoding="utf-8") as fh:
        for rep in range(1, replicates + 1):
            for gen, model in zip(times, models):
                fh.write(f"{rep},{gen},{SamplingModel(model).value}\n")


def column_layout(columns: Sequence[ManifestColumn]):
    """Derive the (replicate, time) grid from manifest columns.

    Returns (times, replicate_ids, index) where ``index[k, t]`` is the
    sync column holding replicate k at time point t.  Every replicate
    must be sequenced at the same generations; models at matching
    generations must agree across replicates.
    """
    times = sorted({c.generation for c in columns})
    reps = sorted({c.replicate for c in columns})
    if times[0] != 0:
        raise ValueError("manifest must include generation 0 (base population)")
    index = np.full((len(reps), len(times)), -1, dtype=np.int64)
    models = {}
    for j, col in enumerate(columns):
        k = reps.index(col.replicate)
        t = times.index(col.generation)
        if index[k, t] != -1:
            raise ValueError(f"duplicate column for replicate {col.replicate} "
                             f"generation {col.generation}")
        index[k, t] = j
        if col.generation in models and models[col.generation] != col.model:
            raise ValueError(f"conflicting models at generation "
                             f"{col.generation}")
        models[col.generation] = col.model
    if np.any(index < 0):
        raise ValueError("manifest is not a full replicate x generation grid")
    base_model = models[times[0]]
    evolved_model = models[times[-1]]
    return np.asarray(times, dtype=np.int64), reps, index, base_model, evolved_model


def biallelize_chunk(chunk: np.ndarray, base_columns: Sequence[int]):
    """Reduce raw base counts to the two retained alleles.

    ``chunk`` is (n_records, n_columns, 6).  The two alleles with the
    highest total count over all columns are kept (N and deletions are
    never eligible); allele 1 is the major allele of the pooled base
    columns, ties broken in A<T<C<G order.  Returns (counts1, depths,
    allele1, allele2, flags, polymorphic) where counts1/depths are
    (n_records, n_columns) and the rest are per-record.
    """
    totals = chunk[:, :, :4].sum(axis=1)  # (n_records, 4)
    n_positive = (totals > 0).sum(axis=1)
    polymorphic = n_positive >= 2
    # stable argsort on negated totals keeps A<T<C<G order among ties
    order = np.argsort(-totals, axis=1, kind="stable")
    top = order[:, :2]  # candidate alleles per record
    base_tot = chunk[:, base_columns, :4].sum(axis=1)
    rows = np.arange(chunk.shape[0])[:, None]
    cand_base = base_tot[rows, top]
    # allele 1 = major at the base time point, base order A<T<C<G on ties
    tie = cand_base[:, 1] == cand_base[:, 0]
    swap = (cand_base[:, 1] > cand_base[:, 0]) | (tie & (top[:, 1] < top[:, 0]))
    a1 = np.where(swap, top[:, 1], top[:, 0])
    a2 = np.where(swap, top[:, 0], top[:, 1])
    counts1 = np.take_along_axis(chunk, a1[:, None, None], axis=2)[:, :, 0]
    counts2 = np.take_along_axis(chunk, a2[:, None, None], axis=2)[:, :, 0]
    flags = np.zeros(chunk.shape[0], dtype=np.uint8)
    flags[n_positive > 2] |= np.uint8(LocusFlag.MULTIALLELIC_COLLAPSED)
    return counts1, counts1 + counts2, a1, a2, flags, polymorphic


def write_results(path, chroms, positions, allele1, allele2, result,
                  header=True):
    """Write the scan result table as TSV.

    Columns: chrom, pos, allele1, allele2, statistic, p_value,
    p_adjusted, neg_log10_p_adjusted, s1_sq, s2_sq, flags.  Variance
    columns join one value per replicate with ';'.  P-values carry 17
    significant digits so a reparse reproduces them bit-exactly.
    """
    p_adj = result.p_adjusted if result.p_adjusted is not None else result.p_value
    with np.errstate(divide="ignore"):
        neg_log = -np.log10(p_adj)
    fh = open(path, "w", encoding="utf-8", newline="\n") if isinstance(path, str) else path
    try:
        if header:
            fh.write("chrom\tpos\tallele1\tallele2\tstatistic\tp_value\t"
                     "p_adjusted\tneg_log10_p_adjusted\ts1_sq\ts2_sq\tflags\n")
        for i in range(result.n_loci):
            s1 = ";".join(format(v, ".17g") for v in result.s1_sq[:, i])
            s2 = ";".join(format(v, ".17g") for v in result.s2_sq[:, i])
            fh.write(f"{chroms[i]}\t{positions[i]}\t{allele1[i]}\t{allele2[i]}\t"
                     f"{format(result.statistic[i], '.17g')}\t"
                     f"{format(result.p_value[i], '.17g')}\t"
                     f"{format(p_adj[i], '.17g')}\t"
                     f"{format(neg_log[i], '.17g')}\t"
                     f"{s1}\t{s2}\t{flag_names(result.flags[i])}\n")
    finally:
        if isinstance(path, str):
            fh.close()


def write_sync(path, read_count, coverage, chrom="sim", start_position=1,
               append=False):
    """Export simulated read counts in sync format (allele 1 = A, 2 = T).

    ``read_count``/``coverage`` are (K, T, n); columns are written
    replicate-major, matching :func:`write_manifest`.
    """
    K, T, n = read_count.shape
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="\n") as fh:
        for i in range(n):
            cols = []
            for k in range(K):
                for t in range(T):
                    a = read_count[k, t, i]
                    b = coverage[k, t, i] - a
                    cols.append(f"{a}:{b}:0:0:0:0")
            fh.write(f"{chrom}\t{start_position + i}\tA\t" + "\t".join(cols) + "\n")


def write_truth(path, data, start_position=1, append=False):
    """Write the per-locus truth table of a simulated dataset."""
    K, T, n = data.true_freq.shape
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="\n") as fh:
        if not append:
            fh.write("pos\ts\tlabel\ttrue_freqs\n")
        for i in range(n):
            freqs = ";".join(format(data.true_freq[k, t, i], ".10g")
                             for k in range(K) for t in range(T))
            label = "selected" if data.selected[i] else "neutral"
            fh.write(f"{start_position + i}\t{format(data.s[i], '.10g')}\t"
                     f"{label}\t{freqs}\n")


def read_truth(path):
    """Read a truth table back: (positions, s, selected)."""
    positions, s, selected = [], [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("pos\t"):
            raise ValueError("not a truth table")
        for line in fh:
            fields = line.rstrip("\n").split("\t")
            positions.append(int(fields[0]))
            s.append(float(fields[1]))
            selected.append(fields[2] == "selected")
    return (np.asarray(positions), np.asarray(s, dtype=np.float64),
            np.asarray(selected, dtype=bool))
