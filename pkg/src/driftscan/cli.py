"""Command-line interface: test, simulate, calibrate, benchmark.

Summaries go to stderr, data to files; the exit code is 0 only when the
run completed without hard errors.  Scan results are bit-identical for
any worker count: loci are processed in fixed-size chunks by pure
functions and reassembled in input order.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .correction import TailCorrection, benjamini_hochberg
from .errors import DriftscanError
from .scan import ScanResult, scan_counts
from .simulate import SimConfig, empirical_fdr_cutoff, iter_blocks
from .syncio import (
    biallelize_chunk,
    column_layout,
    parse_sync,
    read_manifest,
    read_truth,
    write_manifest,
    write_results,
    write_sync,
    write_truth,
)
from .variances import SamplingModel, Scenario

CHUNK = 1 << 14
CUTOFFS = (1e-2, 1e-3, 1e-4, 1e-5)


def _log(message):
    print(f"driftscan: {message}", file=sys.stderr)


# ---------------------------------------------------------------- ingestion

def _read_locus_arrays(path, manifest_path, on_error):
    """Parse a sync file into scan-ready arrays using the manifest layout.

    Returns (meta, counts, depths, times, base_model, evolved_model)
    where meta holds per-locus chrom/pos/alleles/flags.  Loci without
    two observed alleles are dropped (counted in meta['skipped']).
    """
    columns = read_manifest(manifest_path)
    times, reps, index, base_model, evolved_model = column_layout(columns)
    base_cols = list(index[:, 0])
    chroms, positions, a1s, a2s, flag_chunks = [], [], [], [], []
    count_chunks, depth_chunks = [], []
    skipped = 0
    pending = []

    def flush():
        nonlocal skipped
        if not pending:
            return
        raw = np.stack([r.counts for r in pending])
        counts1, depths, a1, a2, flags, poly = biallelize_chunk(raw, base_cols)
        keep = np.flatnonzero(poly)
        skipped += len(pending) - keep.size
        for i in keep:
            rec = pending[i]
            chroms.append(rec.chrom)
            positions.append(rec.position)
            a1s.append("ATCG"[a1[i]])
            a2s.append("ATCG"[a2[i]])
        flag_chunks.append(flags[keep])
        # reorder sync columns into the (K, T) grid
        count_chunks.append(counts1[keep][:, index].transpose(1, 2, 0))
        depth_chunks.append(depths[keep][:, index].transpose(1, 2, 0))
        pending.clear()

    with open(path, encoding="utf-8") as fh:
        n_columns = index.size
        for record in parse_sync(fh, on_error=on_error):
            if record.counts.shape[0] != n_columns:
                raise DriftscanError(
                    f"sync file has {record.counts.shape[0]} columns but the "
                    f"manifest declares {n_columns}")
            pending.append(record)
            if len(pending) >= CHUNK:
                flush()
        flush()

    if count_chunks:
        counts = np.concatenate(count_chunks, axis=2)
        depths = np.concatenate(depth_chunks, axis=2)
        flags = np.concatenate(flag_chunks)
    else:
        counts = np.zeros((len(reps), len(times), 0), dtype=np.int64)
        depths = np.zeros_like(counts)
        flags = np.zeros(0, dtype=np.uint8)
    meta = dict(chroms=chroms, positions=positions, allele1=a1s, allele2=a2s,
                flags=flags, skipped=skipped)
    return meta, counts, depths, times, base_model, evolved_model


# ------------------------------------------------------------------- chunks

def _scan_slice(payload):
    counts, depths, times, scenario, sizes, statistic, min_af = payload
    return scan_counts(counts, depths, times, scenario, sample_sizes=sizes,
                       statistic=statistic, min_af=min_af)


def _merge(parts):
    return ScanResult(
        statistic=np.concatenate([p.statistic for p in parts]),
        p_value=np.concatenate([p.p_value for p in parts]),
        s1_sq=np.concatenate([p.s1_sq for p in parts], axis=1),
        s2_sq=np.concatenate([p.s2_sq for p in parts], axis=1),
        flags=np.concatenate([p.flags for p in parts]),
    )


def _chunked_scan(counts, depths, times, scenario, sizes, statistic, min_af,
                  workers):
    n = counts.shape[2]
    payloads = [
        (counts[:, :, lo:lo + CHUNK], depths[:, :, lo:lo + CHUNK], times,
         scenario, sizes, statistic, min_af)
        for lo in range(0, max(n, 1), CHUNK)
    ]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_scan_slice, payloads))
    else:
        parts = [_scan_slice(p) for p in payloads]
    return _merge(parts)


# ------------------------------------------------------------------- test

def _cmd_test(args):
    meta, counts, depths, times, base_model, evolved_model = _read_locus_arrays(
        args.input, args.manifest, args.on_parse_error)
    K, T, n = counts.shape
    scenario = Scenario(base_model, evolved_model, ne=args.ne,
                        t=int(times[-1] - times[0]),
                        generation_times=tuple(times) if T > 2 else None)
    sizes = None
    if base_model.two_step or evolved_model.two_step:
        if args.sample_size is None:
            raise DriftscanError("two-step models need --sample-size")
        sizes = (args.sample_size, args.sample_size)

    result = _chunked_scan(counts, depths, times, scenario, sizes,
                           args.statistic, args.min_af, args.workers)
    result.flags |= meta["flags"]

    if args.correction == "none":
        result.p_adjusted = result.p_value.copy()
    else:
        p = result.p_value
        if args.correction == "bh-tail":
            if args.tail_model is None:
                raise DriftscanError("--correction bh-tail needs --tail-model")
            p = TailCorrection.load(args.tail_model).transform(p)
        result.p_adjusted = benjamini_hochberg(p) if n else p
    write_results(args.output, meta["chroms"], meta["positions"],
                  meta["allele1"], meta["allele2"], result)

    tested = result.testable()
    n_sig = int((result.p_adjusted[tested] < args.alpha).sum())
    _log(f"tested {int(tested.sum())} of {n} loci "
         f"(skipped {meta['skipped']} non-polymorphic, "
         f"{int((~tested).sum())} flagged untestable); "
         f"{n_sig} significant at adjusted p < {args.alpha}")
    return 0


# ---------------------------------------------------------------- simulate

def _sim_config(args, n_loci=None, seed=None, generations=None):
    return SimConfig(
        n_loci=args.loci if n_loci is None else n_loci,
        ne=args.ne,
        generations=tuple(int(g) for g in args.generations.split(","))
        if generations is None else generations,
        start=args.start,
        sample_size=args.sample_size,
        coverage=args.coverage,
        replicates=args.replicates,
        selected_fraction=args.selected_fraction,
        selection=args.selection,
        dominance=args.dominance,
        seed=args.seed if seed is None else seed,
    )


def _cmd_simulate(args):
    cfg = _sim_config(args)
    sync_path = args.output_prefix + ".sync"
    truth_path = args.output_prefix + ".truth.tsv"
    manifest_path = args.output_prefix + ".manifest"
    times = cfg.generations
    models = [SamplingModel.TWO_STEP] + [SamplingModel.TWO_STEP_DRIFT] * (len(times) - 1)
    write_manifest(manifest_path, cfg.replicates, times, models)
    position = 1
    first = True
    for chunk in iter_blocks(cfg):
        write_sync(sync_path, chunk.read_count, chunk.coverage,
                   start_position=position, append=not first)
        write_truth(truth_path, chunk, start_position=position,
                    append=not first)
        position += chunk.n_loci
        first = False
    if first:  # zero loci: still produce well-formed (empty) files
        open(sync_path, "w", encoding="utf-8").close()
        with open(truth_path, "w", encoding="utf-8") as fh:
            fh.write("pos\ts\tlabel\ttrue_freqs\n")
    _log(f"wrote {cfg.n_loci} loci to {sync_path} (+manifest, truth table)")
    return 0


# ---------------------------------------------------------------- calibrate

def _null_pvalues_from_sim(args):
    cfg = _sim_config(args)
    parts = []
    for chunk in iter_blocks(cfg):
        scenario = Scenario(SamplingModel.TWO_STEP, SamplingModel.TWO_STEP_DRIFT,
                            ne=cfg.ne, t=cfg.generations[-1],
                            generation_times=cfg.generations
                            if len(cfg.generations) > 2 else None)
        res = scan_counts(chunk.read_count, chunk.coverage, chunk.times,
                          scenario, sample_sizes=(cfg.sample_size,) * 2,
                          statistic="auto", min_af=args.min_af)
        parts.append(res.p_value[res.testable()])
    return np.concatenate(parts) if parts else np.zeros(0)


def _cmd_calibrate(args):
    if args.input:
        pvalues = np.loadtxt(args.input, ndmin=1)
    else:
        if args.ne is None or args.loci <= 0:
            raise DriftscanError(
                "calibrating from simulations needs --ne and a positive --loci")
        pvalues = _null_pvalues_from_sim(args)
    model = TailCorrection(z=args.z, s=args.inner_s)
    model.fit(pvalues)
    model.save(args.output)
    corrected = model.transform(pvalues)
    table_path = args.output + ".calibration.tsv"
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("cutoff\tfraction_before\tfraction_after\n")
        for c in CUTOFFS:
            before = float(np.mean(pvalues < c))
            after = float(np.mean(corrected < c))
            fh.write(f"{c:g}\t{before:.6g}\t{after:.6g}\n")
            _log(f"cutoff {c:g}: fraction before {before:.3g}, after {after:.3g}")
    _log(f"model written to {args.output}, calibration table to {table_path}")
    return 0


# ---------------------------------------------------------------- benchmark

def _endpoint_view(counts, depths, times):
    return counts[:, [0, -1]], depths[:, [0, -1]], times[[0, -1]]


def _cmd_benchmark(args):
    meta, counts, depths, times, base_model, evolved_model = _read_locus_arrays(
        args.input, args.manifest, args.on_parse_error)
    positions, s_true, selected = read_truth(args.truth)
    pos_index = {p: i for i, p in enumerate(meta["positions"])}
    matched = np.asarray([p in pos_index for p in positions], dtype=bool)
    locus_of = np.asarray([pos_index[p] for p in positions[matched]])
    sel = selected[matched]
    sel_idx = locus_of[sel]
    neu_idx = locus_of[~sel]
    K, T, n = counts.shape
    t_total = int(times[-1] - times[0])
    sizes = (args.sample_size, args.sample_size)
    alpha = args.alpha

    e_counts, e_depths, e_times = _endpoint_view(counts, depths, times)
    scen2 = Scenario(SamplingModel.TWO_STEP, SamplingModel.TWO_STEP_DRIFT,
                     ne=args.ne, t=t_total)
    scen_classic = Scenario(SamplingModel.ONE_STEP, SamplingModel.ONE_STEP)

    rows = []

    def add_row(name, pvalues, seconds, cutoff=alpha):
        # denominators: every truth-labelled locus that produced a result
        # row (flagged untestable loci carry p = 1 and count as accepts)
        type1 = (float(np.mean(pvalues[neu_idx] < cutoff))
                 if neu_idx.size else float("nan"))
        power = (float(np.mean(pvalues[sel_idx] < cutoff))
                 if sel_idx.size else None)
        rows.append((name, type1, power, seconds))

    # classical chi-square + empirical FDR cutoff from a drift-free null
    t0 = time.perf_counter()
    res_c = scan_counts(e_counts[:1], e_depths[:1], e_times, scen_classic,
                        statistic="chi2")
    dt = time.perf_counter() - t0
    null_cfg = SimConfig(n_loci=args.null_loci, ne=10**9, generations=(0, 1),
                         start=args.null_start, sample_size=args.sample_size,
                         coverage=args.null_coverage, replicates=1,
                         seed=args.seed)
    null_parts = []
    for chunk in iter_blocks(null_cfg):
        r = scan_counts(chunk.read_count, chunk.coverage, chunk.times,
                        scen_classic, statistic="chi2")
        null_parts.append(r.p_value[r.testable()])
    cutoff = empirical_fdr_cutoff(np.concatenate(null_parts), alpha)
    add_row("chi2_classical_empirical_fdr", res_c.p_value, dt, cutoff=cutoff)

    t0 = time.perf_counter()
    res_q = scan_counts(e_counts[:1], e_depths[:1], e_times, scen2,
                        sample_sizes=sizes, statistic="chi2")
    add_row("chi2_adapted", res_q.p_value, time.perf_counter() - t0)

    if K > 1:
        t0 = time.perf_counter()
        res = scan_counts(e_counts, e_depths, e_times, scen2,
                          sample_sizes=sizes, statistic="cmh")
        add_row("cmh_adapted", res.p_value, time.perf_counter() - t0)
    if T > 2:
        scen_ig = Scenario(SamplingModel.TWO_STEP, SamplingModel.TWO_STEP_DRIFT,
                           ne=args.ne, t=t_total, generation_times=tuple(times))
        t0 = time.perf_counter()
        res = scan_counts(counts[:1], depths[:1], times, scen_ig,
                          sample_sizes=sizes, statistic="chi2")
        add_row("chi2_adapted_intgen", res.p_value, time.perf_counter() - t0)
        if K > 1:
            t0 = time.perf_counter()
            res = scan_counts(counts, depths, times, scen_ig,
                              sample_sizes=sizes, statistic="cmh")
            add_row("cmh_adapted_intgen", res.p_value, time.perf_counter() - t0)

    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        out.write("method\ttype_i_error\tpower\ttime_seconds\n")
        for name, type1, power, seconds in rows:
            power_text = "na" if power is None else f"{power:.4f}"
            out.write(f"{name}\t{type1:.4f}\t{power_text}\t{seconds:.4f}\n")
    finally:
        if args.output:
            out.close()
    _log(f"benchmarked {len(rows)} methods over {n} loci at alpha={alpha}")
    return 0


# ------------------------------------------------------------------- parser

def _add_sim_flags(p, ne_required=True):
    p.add_argument("--loci", type=int, default=10000)
    p.add_argument("--ne", type=int, required=ne_required, default=None)
    p.add_argument("--generations", default="0,60",
                   help="comma-separated sequenced generations, e.g. 0,10,20")
    p.add_argument("--start", default="uniform",
                   help="uniform | beta:a,b | fixed:p")
    p.add_argument("--sample-size", type=int, default=1000)
    p.add_argument("--coverage", default="poisson:80",
                   help="poisson:mean | fixed:c")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--selected-fraction", type=float, default=0.0)
    p.add_argument("--selection", default="fixed:0.1",
                   help="fixed:s | exp:mean")
    p.add_argument("--dominance", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="driftscan",
        description="Over-dispersion-aware chi-square/CMH scans for "
                    "allele-frequency change")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="scan a sync file")
    t.add_argument("--input", required=True)
    t.add_argument("--manifest", required=True)
    t.add_argument("--output", required=True)
    t.add_argument("--ne", type=int, default=None)
    t.add_argument("--sample-size", type=int, default=None)
    t.add_argument("--min-af", type=float, default=0.0)
    t.add_argument("--statistic", choices=["auto", "chi2", "cmh"],
                   default="auto")
    t.add_argument("--correction", choices=["none", "bh", "bh-tail"],
                   default="bh")
    t.add_argument("--tail-model", default=None)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--on-parse-error", choices=["fail", "skip"],
                   default="fail")
    t.set_defaults(func=_cmd_test)

    s = sub.add_parser("simulate", help="generate a dataset + truth table")
    s.add_argument("--output-prefix", required=True)
    _add_sim_flags(s)
    s.set_defaults(func=_cmd_simulate)

    c = sub.add_parser("calibrate", help="fit the small-p tail correction")
    c.add_argument("--input", default=None,
                   help="file of null p-values, one per line")
    c.add_argument("--output", required=True, help="model file to write")
    c.add_argument("--z", type=float, default=0.05)
    c.add_argument("--inner-s", type=float, default=None)
    c.add_argument("--min-af", type=float, default=0.0)
    _add_sim_flags(c, ne_required=False)
    c.set_defaults(func=_cmd_calibrate)

    b = sub.add_parser("benchmark", help="type-I/power/runtime comparison")
    b.add_argument("--input", required=True)
    b.add_argument("--manifest", required=True)
    b.add_argument("--truth", required=True)
    b.add_argument("--output", default=None)
    b.add_argument("--ne", type=int, required=True)
    b.add_argument("--sample-size", type=int, default=1000)
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--null-loci", type=int, default=100000)
    b.add_argument("--null-start", default="uniform")
    b.add_argument("--null-coverage", default="poisson:80")
    b.add_argument("--on-parse-error", choices=["fail", "skip"],
                   default="fail")
    b.set_defaults(func=_cmd_benchmark)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DriftscanError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
