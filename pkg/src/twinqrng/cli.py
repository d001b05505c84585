"""Command line for the twin-beam random number pipeline.

Exit codes: 0 success, 2 configuration error, 3 data/sizing error,
4 statistical-test failure (only with ``--strict``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import conditioner, entropy, extractor, reconcile, stats, synth
from .config import ConfigError, config_from_dict, default_config
from .model import ParameterError
from .pipeline import StageError, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TESTS = 0, 2, 3, 4

DATA_ERRORS = (
    extractor.BinningError, synth.WaveformFormatError, synth.WaveformStructureError,
    reconcile.ReconcileError, conditioner.ConditioningError, stats.StatsError, OSError,
)
CONFIG_ERRORS = (ConfigError, ParameterError)


def _config(args):
    """Pipeline config from --config (built-in defaults otherwise) with CLI overrides."""
    if args.config:
        data = json.loads(Path(args.config).read_text()) if Path(args.config).exists() else None
        if data is None:
            raise ConfigError(f"config file {args.config} not found")
    else:
        data = json.loads(default_config().to_json())
    if getattr(args, "seed", None) is not None:
        data.setdefault("acquisition", {})["rng_seed"] = args.seed
    if getattr(args, "out", None):
        data.setdefault("output", {})["directory"] = args.out
    if getattr(args, "workers", None):
        data["workers"] = args.workers
    return config_from_dict(data)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bit_fmt(args) -> str:
    return "ascii" if args.format == "ascii" else "bin"


def _save_bits(b, out: Path, name: str, fmt: str) -> Path:
    return b.save(out / f"{name}.{'txt' if fmt == 'ascii' else 'bin'}", fmt)


def cmd_simulate(args):
    cfg = _config(args)
    w = synth.synthesize(cfg.squeeze, cfg.acquisition, workers=cfg.workers)
    fmt = args.format if args.format in ("csv", "bin") else "bin"
    path = synth.write_waveform(w, _out_dir(args) / f"waveform.{fmt}", fmt)
    print(path)
    return EXIT_OK


def cmd_ingest(args):
    w = synth.ingest_waveform(args.path, args.input_format)
    summary = {"n_samples": len(w), "sha256": w.meta["sha256"],
               "std": {c: float(v.std()) for c, v in w.channels().items()}}
    if args.out:
        fmt = args.format if args.format in ("csv", "bin") else "bin"
        synth.write_waveform(w, _out_dir(args) / f"waveform.{fmt}", fmt)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_extract(args):
    w = synth.ingest_waveform(args.waveform)
    out = _out_dir(args)
    for ch in ("probe", "conjugate"):
        samples = getattr(w, ch)
        scheme = extractor.fit_bins(samples[: args.fit_size], args.n_bits)
        (out / f"scheme_{ch}.json").write_text(scheme.to_json())
        print(_save_bits(extractor.encode(samples, scheme, ch), out, f"bits_{ch}", _bit_fmt(args)))
    return EXIT_OK


def cmd_entropy(args):
    w = synth.ingest_waveform(args.waveform)
    lo, _, hi = args.bits.partition("-")
    rng = range(int(lo), int(hi or lo) + 1)
    curve = entropy.entropy_curve(getattr(w, args.channel), w.elec_ref, rng, fit_size=args.fit_size,
                                  classical_edges=args.classical_edges)
    text = entropy.reports_to_csv(curve)
    if args.out:
        (_out_dir(args) / f"entropy_{args.channel}.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_reconcile(args):
    a = extractor.BitStream.load(args.a)
    b = extractor.BitStream.load(args.b)
    rec = reconcile.common_bits(a, b, args.granularity)
    out = _out_dir(args)
    _save_bits(rec.kept, out, "bits_reconciled", _bit_fmt(args))
    reconcile.write_mask(rec.indices, out / "mask.u64")
    print(json.dumps({"agreement_rate": rec.agreement_rate, "kept_bits": len(rec.kept)}))
    return EXIT_OK


def cmd_condition(args):
    bits = extractor.BitStream.load(args.bits)
    if args.h_effective is not None:
        in_block, out_block = conditioner.choose_ratio(args.h_effective, args.n_bits, args.safety)
    else:
        in_block, out_block = args.in_block, args.out_block
    final = conditioner.condition(bits, in_block, out_block)
    print(_save_bits(final, _out_dir(args), "bits_conditioned", _bit_fmt(args)))
    return EXIT_OK


def cmd_test(args):
    bits = extractor.BitStream.load(args.bits)
    outcomes = stats.run_battery(bits, args.seq_len, args.n_sequences)
    if args.out:
        out = _out_dir(args)
        (out / "battery.json").write_text(stats.outcomes_to_json(outcomes))
        (out / "battery.csv").write_text(stats.outcomes_to_csv(outcomes))
    thr = stats.proportion_threshold(args.n_sequences)
    for o in outcomes:
        flag = "PASS" if o.passed else "FAIL"
        print(f"{flag} {o.test_name:24s} proportion={o.proportion_passed:.4f} (min {thr:.4f}) "
              f"uniformity_p={o.uniformity_p:.4g}")
    if args.strict and not all(o.passed for o in outcomes):
        return EXIT_TESTS
    return EXIT_OK


def cmd_corr(args):
    if args.bits:
        prof = stats.bit_autocorrelation(extractor.BitStream.load(args.bits), args.max_lag)
    else:
        w = synth.ingest_waveform(args.waveform)
        prof = stats.cross_correlation(w.probe, w.conjugate, args.max_lag)
    text = prof.to_csv()
    if args.out:
        (_out_dir(args) / ("autocorrelation.csv" if args.bits else "cross_correlation.csv")).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_pipeline(args):
    cfg = _config(args)
    if args.format in ("bin", "ascii"):
        cfg.output.bit_format = args.format
    report = run_pipeline(cfg)
    summary = {
        "rho_lag0": report["correlation"]["rho_lag0"],
        "h_effective": {ch: v["h_effective"] for ch, v in report["entropy"].items()},
        "agreement_rate": report["reconcile"]["agreement_rate"],
        "conditioned_bits": report["conditioning"]["conditioned_bits"],
        "throughput_bps": report["timing"]["throughput_bps"],
        "battery_passed": report["battery"]["all_passed"],
        "output": cfg.output.directory,
    }
    print(json.dumps(summary, indent=2))
    if args.strict and not report["battery"]["all_passed"]:
        return EXIT_TESTS
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline JSON config")
    common.add_argument("--seed", type=int, help="override acquisition.rng_seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "bin", "ascii"), default="bin")
    common.add_argument("--workers", type=int)
    common.add_argument("--strict", action="store_true", help="exit 4 when a statistical test fails")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="twinqrng", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("simulate", parents=[common], help="synthesize a twin-beam waveform").set_defaults(fn=cmd_simulate)

    s = sub.add_parser("ingest", parents=[common], help="load and validate a recorded waveform")
    s.add_argument("path")
    s.add_argument("--input-format", choices=("csv", "bin"))
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("extract", parents=[common], help="equal-frequency binning of both channels")
    s.add_argument("waveform")
    s.add_argument("--n-bits", type=int, default=8)
    s.add_argument("--fit-size", type=int, default=extractor.DEFAULT_FIT_SIZE)
    s.set_defaults(fn=cmd_extract)

    s = sub.add_parser("entropy", parents=[common], help="effective-entropy curve")
    s.add_argument("waveform")
    s.add_argument("--channel", choices=("probe", "conjugate"), default="probe")
    s.add_argument("--bits", default="1-12", help="n_bits range, e.g. 1-12")
    s.add_argument("--fit-size", type=int)
    s.add_argument("--classical-edges", choices=("signal", "classical"), default="signal")
    s.set_defaults(fn=cmd_entropy)

    s = sub.add_parser("reconcile", parents=[common], help="keep common bits of two streams")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--granularity", choices=("bit", "symbol"), default="bit")
    s.set_defaults(fn=cmd_reconcile)

    s = sub.add_parser("condition", parents=[common], help="SHA-512 conditioning")
    s.add_argument("bits")
    s.add_argument("--in-block", type=int, default=conditioner.DEFAULT_GEOMETRY[0])
    s.add_argument("--out-block", type=int, default=conditioner.DEFAULT_GEOMETRY[1])
    s.add_argument("--h-effective", type=float, help="choose the geometry from this entropy estimate")
    s.add_argument("--n-bits", type=int, default=8)
    s.add_argument("--safety", type=float, default=conditioner.DEFAULT_SAFETY)
    s.set_defaults(fn=cmd_condition)

    s = sub.add_parser("test", parents=[common], help="run the native randomness battery")
    s.add_argument("bits")
    s.add_argument("--seq-len", type=int, default=1_000_000)
    s.add_argument("--n-sequences", type=int, default=40)
    s.set_defaults(fn=cmd_test)

    s = sub.add_parser("corr", parents=[common], help="cross-correlation of a waveform or bit autocorrelation")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--waveform")
    src.add_argument("--bits")
    s.add_argument("--max-lag", type=int, default=100)
    s.set_defaults(fn=cmd_corr)

    sub.add_parser("pipeline", parents=[common], help="run every stage end to end").set_defaults(fn=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        if isinstance(e.cause, CONFIG_ERRORS):
            return EXIT_CONFIG
        return EXIT_DATA if isinstance(e.cause, DATA_ERRORS) else 1
    except CONFIG_ERRORS as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
