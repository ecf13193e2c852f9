# app/cli.py
from __future__ import annotations
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from rapidfuzz import process

from app import __version__
from app.middlewares.error_logging import EXIT_INPUT, ErrorsLoggingMiddleware
from app.routers import Command, Router
from app.routers import experiments as experiments_router
from app.routers import instances as instances_router
from app.routers import theory as theory_router
from app.services.output import envelope, render
from app.settings import settings

# служебные ключи Namespace, не попадающие в эхо параметров
_INTERNAL = ("verb", "_command")


class Dispatcher:
    def __init__(self) -> None:
        self.commands: Dict[str, Command] = {}
        self.middleware = ErrorsLoggingMiddleware()

    def include_router(self, router: Router) -> None:
        for verb, command in router.commands.items():
            if verb in self.commands:
                raise ValueError(f"verb {verb!r} from router {router.name} is already registered")
            self.commands[verb] = command

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="naesat", description="random regular k-NAE-SAT toolkit")
        parser.add_argument("--version", action="version", version=f"naesat {__version__}")
        sub = parser.add_subparsers(dest="verb", metavar="verb")
        for verb, command in self.commands.items():
            p = sub.add_parser(verb, help=command.help, description=command.help)
            for a in command.arguments:
                p.add_argument(*a.flags, **a.kwargs)
            if not any("--out" in a.flags for a in command.arguments):
                p.add_argument("--out", default=None, help="write the output here instead of stdout")
            p.set_defaults(_command=command)
        return parser

    def suggest(self, verb: str) -> Optional[str]:
        match = process.extractOne(verb, list(self.commands))
        return match[0] if match and match[1] >= 50 else None

    def execute(self, args: argparse.Namespace) -> None:
        command: Command = args._command
        reply = command.handler(args)
        params = {k: v for k, v in vars(args).items() if k not in _INTERNAL}
        doc = envelope(command.verb, params, reply.result, reply.bits)
        text = render(doc, args.format)
        # у gen --out занят самим инстансом
        target = args.out if command.verb != "gen" else None
        if target:
            Path(target).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
            sys.stdout.flush()

    def run(self, argv: Sequence[str]) -> int:
        argv = list(argv)
        if argv and not argv[0].startswith("-") and argv[0] not in self.commands:
            hint = self.suggest(argv[0])
            print(f"error: unknown verb {argv[0]!r}" + (f"; did you mean {hint!r}?" if hint else ""), file=sys.stderr)
            return EXIT_INPUT
        parser = self.build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        if args.verb is None:
            parser.print_usage(sys.stderr)
            return EXIT_INPUT
        return self.middleware(self.execute, args)


def build_dispatcher() -> Dispatcher:
    dp = Dispatcher()
    dp.include_router(theory_router.router)
    dp.include_router(instances_router.router)
    dp.include_router(experiments_router.router)
    return dp


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=settings.log_level_value,
        format="%(asctime)s — %(levelname)s — %(message)s",
        stream=sys.stderr,
    )
    return build_dispatcher().run(sys.argv[1:] if argv is None else argv)
