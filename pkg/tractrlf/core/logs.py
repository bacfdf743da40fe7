import logging
import sys

from tqdm import tqdm


class KeyValueFormatter(logging.Formatter):
    """Formats records as `level=INFO logger=tractrlf.env msg="..." key=value`."""

    def format(self, record: logging.LogRecord) -> str:
        parts = [f"level={record.levelname}", f"logger={record.name}", f'msg="{record.getMessage()}"']
        for key, value in getattr(record, "fields", {}).items():
            parts.append(f"{key}={value}")
        if record.exc_info:
            parts.append(f'exc="{self.formatException(record.exc_info)}"')
        return " ".join(parts)


def configure_logging(level: str = "INFO") -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    root = logging.getLogger("tractrlf")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def progress(iterable=None, **kwargs):
    """tqdm progress bar that stays quiet when stderr is not a terminal."""
    kwargs.setdefault("disable", not sys.stderr.isatty())
    kwargs.setdefault("leave", False)
    return tqdm(iterable, **kwargs)
