"""Command line entry point: ``evos {fit,compare,ablate,eval,serve}``.

Experiments run in-process unless ``--server URL`` is given, in which case
the CLI submits them to a running ``evos serve`` and waits for results.
Paths are then resolved on the server's filesystem.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .compare import (ABLATIONS, ablation_configs, ablation_rows, comparison_rows,
                      format_table, strategy_configs, time_to_target_rows,
                      validate_comparable, write_table)
from .config import load_config
from .signal import SignalError, load_audio, load_image
from .trainer import evaluate_checkpoint, run_experiment


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise SystemExit(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _config(args, **extra):
    over = _overrides(args.set)
    over.update({k: v for k, v in extra.items() if v is not None})
    return load_config(args.config, over)


def _runner(args):
    if args.server:
        from .client import ServiceClient
        return ServiceClient(args.server).run
    return lambda configs: [run_experiment(cfg) for cfg in configs]


def _report(records) -> int:
    aborted = [r for r in records if r.aborted]
    for rec in aborted:
        print(f"run {rec.config.name} aborted: {rec.aborted}", file=sys.stderr)
    return 1 if aborted else 0


def cmd_fit(args) -> int:
    cfg = _config(args, signal=args.signal, output_dir=args.out)
    (record,) = _runner(args)([cfg])
    final = record.final
    print(f"{cfg.name}: {record.iterations} iterations, "
          f"{record.total_seconds:.2f} s training, "
          f"selection {100 * record.selection_fraction:.2f}%")
    if final is not None:
        print(f"final PSNR {final.psnr:.2f} dB, SSIM {final.ssim:.4f}, MSE {final.mse:.3e}")
    for key, path in record.paths.items():
        print(f"{key}: {path}")
    return _report([record])


def _per_signal_out(cfg, out: Path | None, signal: str, multi: bool):
    if out is None:
        return cfg
    sub = out / cfg.name / Path(signal).stem if multi else out / cfg.name
    return cfg.model_copy(update={"output_dir": str(sub)})


def cmd_compare(args) -> int:
    base = _config(args)
    out = Path(args.out) if args.out else None
    configs = []
    for signal in args.signals:
        per = base.model_copy(update={"signal": signal})
        for cfg in strategy_configs(per, args.strategies.split(",")):
            configs.append(_per_signal_out(cfg, out, signal, len(args.signals) > 1))
    validate_comparable(configs)
    records = _runner(args)(configs)
    quality = comparison_rows(records)
    targets = time_to_target_rows(records)
    print(format_table(quality))
    print()
    print(format_table(targets))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "comparison.csv", quality)
        write_table(out / "time_to_target.csv", targets)
    return _report(records)


def cmd_ablate(args) -> int:
    base = _config(args, signal=args.signal)
    out = Path(args.out) if args.out else None
    labels = args.settings.split(",") if args.settings else None
    configs = [_per_signal_out(c, out, args.signal, False)
               for c in ablation_configs(base, labels)]
    records = _runner(args)(configs)
    rows = ablation_rows(records)
    print(format_table(rows))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "ablation.csv", rows)
    return _report(records)


def cmd_eval(args) -> int:
    if args.server:
        from .client import ServiceClient
        result = ServiceClient(args.server).evaluate(args.checkpoint, args.signal, args.out)
    else:
        crop = tuple(int(v) for v in args.center_crop.split("x")) if args.center_crop else None
        if args.signal.lower().endswith(".wav"):
            signal = load_audio(args.signal)
        else:
            signal = load_image(args.signal, crop)
        result = evaluate_checkpoint(args.checkpoint, signal, args.out)
    print(json.dumps(result, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(args.workers), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evos", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(p):
        p.add_argument("-c", "--config", help="key=value config file")
        p.add_argument("-s", "--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("-o", "--out", help="output directory")
        p.add_argument("--server", help="submit to a running service at this URL")

    p = sub.add_parser("fit", help="train one experiment")
    p.add_argument("signal", nargs="?", help="image (PNG/BMP) or WAV file")
    experiment(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="strategy comparison tables")
    p.add_argument("signals", nargs="+")
    p.add_argument("--strategies", default="standard,uniform,evos_wo_cfs,evos")
    experiment(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate", help="component ablation grid")
    p.add_argument("signal")
    p.add_argument("--settings", help=f"comma list from {','.join(ABLATIONS)}")
    experiment(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="metrics for a saved checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("signal")
    p.add_argument("--center-crop", metavar="HxW")
    p.add_argument("-o", "--out", help="write the reconstruction here")
    p.add_argument("--server")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--workers", type=int, default=1, help="concurrent training jobs")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SignalError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
