import logging
import sys

from app.services.errors import InputError, NumericError, SolverBudgetError

EXIT_OK = 0
EXIT_UNHANDLED = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class ErrorsLoggingMiddleware:
    def __call__(self, handler, args) -> int:
        try:
            handler(args)
            return EXIT_OK
        except (InputError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INPUT
        except (NumericError, SolverBudgetError) as e:
            print(f"numeric error: {e}", file=sys.stderr)
            return EXIT_NUMERIC
        except Exception:
            logging.exception("Unhandled error", extra={
                "command": getattr(args, "verb", None),
                "params": {k: v for k, v in vars(args).items() if k != "_command"},
            })
            return EXIT_UNHANDLED
