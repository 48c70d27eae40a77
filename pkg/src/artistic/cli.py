"""``artistic`` command line.

Exit status: 0 success, 1 unexpected error, 2 configuration, 3 input or
GDSII parse, 4 art generation or hierarchy, 5 rendering/compositing/output.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .compose import ComposeError
from .config import ConfigError, load_config
from .gdsii import GdsError
from .geom import FlattenError
from .meerkat import ArtError
from .pipeline import COMMANDS, ArtifactError, InputError, StageError
from .raster import RasterError, default_jobs

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_INPUT, EXIT_ART, EXIT_RENDER = range(6)

log = logging.getLogger("artistic")


def exit_code(error: BaseException) -> int:
    if isinstance(error, StageError):
        error = error.error
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, (InputError, GdsError, OSError)):
        return EXIT_INPUT
    if isinstance(error, (ArtError, FlattenError)):
        return EXIT_ART
    if isinstance(error, (RasterError, ComposeError, ArtifactError)):
        return EXIT_RENDER
    return EXIT_UNEXPECTED


def _jobs(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--jobs must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="artistic",
        description="Embed logo art into GDSII top metal and render layouts to PNG/PDF.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config; relative paths resolve next to it")
    p.add_argument("--jobs", type=_jobs, default=None,
                   help=f"worker threads (default: {default_jobs()})")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        report = COMMANDS[args.command](cfg, args.jobs)
    except Exception as e:  # noqa: BLE001 - mapped to an exit status
        code = exit_code(e)
        log.error("%s failed: %s", args.command, e)
        if code == EXIT_UNEXPECTED or args.verbose:
            log.exception("traceback")
        return code
    for path in report.artifacts:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
