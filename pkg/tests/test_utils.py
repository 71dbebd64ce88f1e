import logging

import numpy as np
import pytest

from actiongraphpy.utils import (
    SeedStreams, atomic_write, format_float, logger_setup, parse_timestamp, parse_version, utc_timestamp,
)


def test_seed_streams_are_named_and_reproducible():
    a, b = SeedStreams(3), SeedStreams(3)
    np.testing.assert_array_equal(a.generator("env").random(5), b.generator("env").random(5))
    assert not np.array_equal(a.generator("env").random(5), a.generator("eval").random(5))
    assert not np.array_equal(a.generator("eval", 0).random(5), a.generator("eval", 1).random(5))
    assert not np.array_equal(a.generator("env").random(5), SeedStreams(4).generator("env").random(5))
    with pytest.raises(ValueError):
        a.generator("nope")


def test_format_float_round_trips():
    for value in (0.1 + 0.2, 1 / 3, -2.5e-300, 240 / 729):
        assert float(format_float(value)) == value


def test_atomic_write_creates_parents_and_leaves_no_temp(tmp_path):
    target = tmp_path / "a" / "b" / "file.csv"
    atomic_write(target, "x,y\n1,2\n")
    atomic_write(target, "x,y\n3,4\n")
    assert target.read_bytes() == b"x,y\n3,4\n"
    assert [p.name for p in target.parent.iterdir()] == ["file.csv"]


def test_logger_setup_is_idempotent(tmp_path):
    log_file = tmp_path / "logs" / "run.log"
    log = logger_setup("actiongraphpy.test_utils", logging.WARNING, log_to_file=str(log_file),
                       file_level=logging.DEBUG)
    handlers = list(log.handlers)
    assert logger_setup("actiongraphpy.test_utils", logging.INFO).handlers == handlers
    assert len(handlers) == 2
    logger_setup("actiongraphpy.test_utils", logging.WARNING, log_to_file=str(log_file), file_level=logging.DEBUG)
    log.debug("hello file")
    for h in handlers:
        h.flush()
    assert "hello file" in log_file.read_text()
    for h in handlers:
        log.removeHandler(h)
        h.close()


def test_versions_and_timestamps():
    assert parse_version("1.3").major == 1
    stamp = utc_timestamp()
    parsed = parse_timestamp(stamp)
    assert parsed is not None and parsed.utcoffset().total_seconds() == 0
    assert parse_timestamp("") is None and parse_timestamp("not a date") is None
