import argparse
import logging
import sys

from app.config import get, load_experiment_config
from app.exceptions import EXIT_IO, MaskReconError
from app.metrics import report_lines
from app.tasks import cmd_eval, cmd_hull, cmd_phantom, cmd_reconstruct, cmd_sinogram


logger = logging.getLogger(__name__)


def resolve_log_level(value) -> int:
    """Numeric logging level for a name such as 'debug'; unknown names fall back to INFO."""
    name = str(value or "").strip().upper()
    level = logging.getLevelName(name)
    if isinstance(level, int):
        return level
    logger.warning("Unknown MASKRECON_LOG_LEVEL %r, using INFO", value)
    return logging.INFO


# Configure logging
logging.basicConfig(
    level=resolve_log_level(get("MASKRECON_LOG_LEVEL")),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskrecon",
        description="Mask-constrained sparse CT reconstruction (mask IHT / DORE / ISTA).",
    )
    parser.add_argument("command", choices=["phantom", "sinogram", "hull", "reconstruct", "eval"])
    parser.add_argument("--config", type=str, default=None, help="flat key = value experiment file")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--method", choices=["fbp", "iht", "dore", "ista"], default=None)
    parser.add_argument("--mask", choices=["full", "hull", "file"], default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--n", type=int, default=None, help="grid side (power of two)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_experiment_config(
            args.config, out=args.out, method=args.method, mask=args.mask, seed=args.seed, n=args.n,
        )
        logger.info("Running '%s' (n=%d, method=%s, mask=%s)", args.command, config.n, config.method, config.mask)

        if args.command == "phantom":
            for name, path in cmd_phantom(config).items():
                print(f"{name} = {path}")
        elif args.command == "sinogram":
            print(f"sinogram = {cmd_sinogram(config)}")
        elif args.command == "hull":
            print(report_lines(cmd_hull(config)), end="")
        elif args.command == "reconstruct":
            outcome = cmd_reconstruct(config)
            if outcome.report is not None:
                print(report_lines(outcome.report), end="")
            return outcome.exit_code
        else:
            print(report_lines(cmd_eval(config)), end="")
        return 0

    except MaskReconError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
