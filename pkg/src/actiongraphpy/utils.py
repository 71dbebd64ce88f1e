"""
actiongraphpy.utils
-------------------

Small shared helpers: logging setup, atomic text writes, named seed streams,
exact float formatting, timers and version/timestamp parsing.
"""

from __future__ import annotations

import logging
import os
import tempfile
import threading
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import *

import dateutil.parser as _dateutil_parser
import numpy as np
from packaging import version

__all__ = [
    "logger_setup",
    "atomic_write",
    "SeedStreams",
    "STREAM_INDEX",
    "format_float",
    "metrics_collector",
    "parse_version",
    "utc_timestamp",
    "parse_timestamp",
]

# spawn index per stream name; changing one changes every seeded result
STREAM_INDEX: Dict[str, int] = {"env": 0, "init": 1, "explore": 2, "sample": 3, "eval": 4, "export": 5}

_SETUP_FLAG = "_actiongraph_setup_done"


def logger_setup(name: str,
                 level: int = logging.INFO,
                 *,
                 log_to_file: Optional[str] = None,
                 file_level: Optional[int] = None,
                 fmt: str = "%(asctime)s %(name)s %(levelname)s: %(message)s",
                 datefmt: str = "%Y-%m-%d %H:%M:%S") -> logging.Logger:
    """
    Attach console (and optionally file) handlers to the `name` logger.

    Only the first call per logger installs handlers; later calls just adjust the
    logger level, so the CLI and tests can call it freely.

    Parameters
    ----------
    name : str
        Logger name, normally "actiongraphpy".
    level : int
        Console level.
    log_to_file : Optional[str]
        Also write records to this file (parent folders are created).
    file_level : Optional[int]
        File handler level; defaults to `level`.

    Example
    -------
    >>> log = logger_setup("actiongraphpy", logging.DEBUG, log_to_file="out/train.log")
    """
    log = logging.getLogger(name)
    file_level = level if file_level is None else file_level
    log.setLevel(min(level, file_level) if log_to_file else level)
    if getattr(log, _SETUP_FLAG, False):
        return log

    formatter = logging.Formatter(fmt=fmt, datefmt=datefmt)
    console = logging.StreamHandler()
    console.setLevel(level)
    console.setFormatter(formatter)
    log.addHandler(console)
    if log_to_file:
        Path(log_to_file).expanduser().resolve().parent.mkdir(parents=True, exist_ok=True)
        to_file = logging.FileHandler(log_to_file, encoding="utf-8")
        to_file.setLevel(file_level)
        to_file.setFormatter(formatter)
        log.addHandler(to_file)
    setattr(log, _SETUP_FLAG, True)
    return log


def atomic_write(path: Union[str, Path], text: str) -> None:
    """
    Replace `path` with `text` (UTF-8, no newline translation) in one rename.

    The content goes to a temporary sibling first and is fsynced, so readers never see
    a half-written CSV or checkpoint. Missing parent folders are created.

    Raises
    ------
    OSError
        On filesystem errors; the temporary file is removed.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


class SeedStreams:
    """
    Expand one master seed into independent, named random streams.

    Each name maps to a fixed spawn index of `numpy.random.SeedSequence`, so the
    stream a consumer sees depends only on (master seed, name, counter) and never on
    how many draws other consumers made. Extra evaluation calls therefore cannot
    perturb training randomness.

    Example
    -------
    >>> streams = SeedStreams(7)
    >>> env_rng = streams.generator("env")
    >>> eval_rng = streams.generator("eval", 3)   # 4th evaluation call
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def sequence(self, name: str, counter: Optional[int] = None) -> np.random.SeedSequence:
        if name not in STREAM_INDEX:
            raise ValueError(f"Unknown seed stream {name!r}; expected one of {sorted(STREAM_INDEX)}")
        key: Tuple[int, ...] = (STREAM_INDEX[name],) if counter is None else (STREAM_INDEX[name], int(counter))
        return np.random.SeedSequence(entropy=self.seed, spawn_key=key)

    def generator(self, name: str, counter: Optional[int] = None) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence(name, counter)))

    def __repr__(self) -> str:
        return f"<SeedStreams seed={self.seed}>"


def format_float(value: float) -> str:
    """17 significant digits: exact round-trip for 64-bit floats."""
    return format(float(value), ".17g")


class metrics_collector:
    """
    Thread-safe counters and wall-clock timers.

    Counters are ints under their key; timers keep every sample (seconds) so callers can
    average the last n passes.

    Example
    -------
    >>> metrics = metrics_collector()
    >>> with metrics.timer("forward/N4A2"):
    ...     message_pass(x, node_set, avail, edges, params)
    >>> metrics.increment("passes")
    >>> metrics.summary()["forward/N4A2"]["count"]
    1
    """

    def __init__(self):
        self._counters: Dict[str, int] = {}
        self._timings: Dict[str, List[float]] = {}
        self._lock = threading.Lock()

    def increment(self, key: str, value: int = 1) -> None:
        with self._lock:
            self._counters[key] = self._counters.get(key, 0) + int(value)

    @contextmanager
    def timer(self, key: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self._timings.setdefault(key, []).append(elapsed)

    def samples(self, key: str) -> List[float]:
        with self._lock:
            return list(self._timings.get(key, ()))

    def summary(self) -> Dict[str, Any]:
        """Counters as-is; each timer as {count, mean_s, min_s, max_s}."""
        with self._lock:
            out: Dict[str, Any] = dict(self._counters)
            for key, values in self._timings.items():
                arr = np.asarray(values)
                out[key] = {"count": int(arr.size), "mean_s": float(arr.mean()),
                            "min_s": float(arr.min()), "max_s": float(arr.max())}
            return out


def parse_version(ver_str: str) -> version.Version:
    """
    Parse a checkpoint format version ("1.0") into a comparable Version.

    Raises
    ------
    packaging.version.InvalidVersion
    """
    return version.parse(ver_str)


def utc_timestamp() -> str:
    """Current UTC time, ISO 8601, whole seconds."""
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def parse_timestamp(value: Optional[str]) -> Optional[datetime]:
    """ISO timestamp -> datetime via python-dateutil; None for empty or unparsable input."""
    if not value:
        return None
    try:
        return _dateutil_parser.isoparse(value)
    except (ValueError, OverflowError):
        return None
