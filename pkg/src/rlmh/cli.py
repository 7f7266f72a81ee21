"""Command-line client.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 when any
replicate hit the catastrophic-failure detector.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, RlmhError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CATASTROPHIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text: str, n: int | None = None) -> list[float]:
    try:
        values = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(values) != n:
        raise argparse.ArgumentTypeError(f"expected {n} numbers, got {len(values)}")
    return values


def _bbox(text: str) -> list[float]:
    return _float_list(text, 4)


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", metavar="PATH", required=config_required, help="YAML/JSON run configuration")
    p.add_argument("--seed", type=int, metavar="N", help="override the base seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--replicates", type=int, metavar="N", help="override the replicate count")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a (dotted) configuration key; repeatable")
    p.add_argument("--server", metavar="URL", help="send the job to a running service instead of running locally")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rlmh", description="Adaptive MH experiments with learned step sizes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one configuration (all replicates)")
    _common(p)

    p = sub.add_parser("sweep", help="constant step-size sweep, MMD percentiles per grid point")
    _common(p)
    p.add_argument("--grid", type=_float_list, required=True, metavar="E1,E2,...",
                   help="comma-separated constant step sizes")

    p = sub.add_parser("export-policy", help="evaluate a trained 2-D actor on a grid and write CSV")
    _common(p, config_required=False)
    p.add_argument("--checkpoint", metavar="PATH", help="actor checkpoint (default: actor_checkpoint from --config)")
    p.add_argument("--bbox", type=_bbox, required=True, metavar="X1LO,X1HI,X2LO,X2HI")
    p.add_argument("--resolution", type=int, default=40, metavar="R")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _client(args):
    from .client import LocalClient, RemoteClient

    return RemoteClient(args.server) if args.server else LocalClient()


def _read_config(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}", key="config") from None


def _run(args) -> int:
    from .service.schemas import RunRequest

    req = RunRequest(config=_read_config(args.config), overrides=args.override, seed=args.seed,
                     replicates=args.replicates, out=args.out)
    res = _client(args).run(req)
    for r in res.replicates:
        if r.failed:
            print(f"replicate {r.replicate}: CATASTROPHIC FAILURE at iteration {r.failure_iteration}: {r.failure}")
        else:
            s = r.summary or {}
            print(f"replicate {r.replicate}: aar={s.get('aar')} mmd={s.get('mmd')}")
    print(f"outputs in {res.out_dir}")
    return EXIT_CATASTROPHIC if res.catastrophic else EXIT_OK


def _sweep(args) -> int:
    from .service.schemas import SweepRequest

    req = SweepRequest(config=_read_config(args.config), overrides=args.override, seed=args.seed,
                       replicates=args.replicates, out=args.out, grid=args.grid)
    res = _client(args).sweep(req)
    print("eps,mmd_p25,mmd_p50,mmd_p75,n_ok,n_failed")
    for r in res.rows:
        print(f"{r.eps:g},{r.p25:.6g},{r.p50:.6g},{r.p75:.6g},{r.n_ok},{r.n_failed}")
    print(f"table written to {res.table}")
    return EXIT_RUNTIME if any(r.n_failed for r in res.rows) else EXIT_OK


def _export(args) -> int:
    from .harness.config import load_config
    from .service.schemas import ExportRequest

    checkpoint = args.checkpoint
    out_dir = args.out
    if args.config:
        cfg = load_config(_read_config(args.config), args.override)
        checkpoint = checkpoint or cfg.actor_checkpoint
        out_dir = out_dir or cfg.output_dir
    if not checkpoint:
        raise ConfigError("export-policy needs --checkpoint or a config with actor_checkpoint", key="checkpoint")
    out = Path(out_dir or ".") / "policy_grid.csv"
    req = ExportRequest(checkpoint=checkpoint, bbox=tuple(args.bbox), resolution=args.resolution, out=str(out))
    res = _client(args).export_policy(req)
    print(f"{res.rows} grid points written to {res.path}")
    return EXIT_OK


def _serve(args) -> int:
    import uvicorn

    uvicorn.run("rlmh.service.api:app", host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {"run": _run, "sweep": _sweep, "export-policy": _export, "serve": _serve}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "replicates", None) is not None and args.replicates < 1:
        print("error: --replicates must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RlmhError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
