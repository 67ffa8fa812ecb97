"""
Blockpost - Utilities
======================
helper functions used across the app
logging, file writes, number formatting - just the basics
"""

import os
import sys
import hashlib
import tempfile
from datetime import datetime
from typing import Iterable, Sequence


def log(msg: str):
    """print with timestamp so whoever is tailing the run can parse it"""
    timestamp = datetime.now().strftime("%H:%M:%S")
    print(f"[{timestamp}] {msg}", flush=True)


def error(msg: str):
    """print error to stderr"""
    timestamp = datetime.now().strftime("%H:%M:%S")
    print(f"[{timestamp}] ERROR: {msg}", file=sys.stderr, flush=True)


def ensure_dir(path: str) -> str:
    """
    1a. make sure directory exists, create if not
    returns the path
    """
    os.makedirs(path, exist_ok=True)
    return path


def atomic_write_text(path: str, text: str) -> str:
    """
    1b. write a text file by writing a temp file next to it then renaming
    readers never see a half written output
    """
    folder = os.path.dirname(os.path.abspath(path))
    ensure_dir(folder)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp_", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return path


def get_file_hash(filepath: str) -> str:
    """
    1c. sha256 of file contents
    used to check two runs wrote the exact same bytes
    """
    hasher = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def format_float(value: float) -> str:
    """
    2a. 17 significant digits - enough to round trip any double
    """
    return f"{float(value):.17g}"


def format_row(values: Sequence) -> str:
    """2b. one csv row, floats at full precision, ints as ints"""
    cells = []
    for v in values:
        if isinstance(v, (int,)) and not isinstance(v, bool):
            cells.append(str(v))
        elif isinstance(v, str):
            cells.append(v)
        else:
            cells.append(format_float(v))
    return ",".join(cells)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """2c. build a whole csv file as one string"""
    lines = [",".join(header)]
    lines.extend(format_row(r) for r in rows)
    return "\n".join(lines) + "\n"


def format_duration(seconds: float) -> str:
    """
    3a. format seconds to human readable duration
    like "1:23:45" or "5:30"
    """
    hours = int(seconds // 3600)
    minutes = int((seconds % 3600) // 60)
    secs = int(seconds % 60)

    if hours > 0:
        return f"{hours}:{minutes:02d}:{secs:02d}"
    else:
        return f"{minutes}:{secs:02d}"


def format_bytes(size: float) -> str:
    """
    3b. format bytes to human readable size
    like "1.5 GB" or "256 MB"
    """
    for unit in ['B', 'KB', 'MB', 'GB', 'TB']:
        if size < 1024:
            return f"{size:.1f} {unit}"
        size /= 1024
    return f"{size:.1f} PB"


def parse_int_list(text: str) -> list:
    """3c. "100,200,400" -> [100, 200, 400]"""
    return [int(part) for part in text.split(",") if part.strip()]


def run_tests(title: str, namespace: dict) -> bool:
    """
    4a. run every test_* function in namespace, print a line per test
    lets the test scripts run standalone without pytest
    """
    print("=" * 60)
    print(f"  BLOCKPOST - {title}")
    print("=" * 60)

    tests = [fn for name, fn in namespace.items() if name.startswith("test_") and callable(fn)]
    failed = []
    for fn in tests:
        start = datetime.now()
        try:
            fn()
            secs = (datetime.now() - start).total_seconds()
            print(f"[Test] {fn.__name__} ok ({secs:.1f}s)")
        except Exception as e:
            failed.append(fn.__name__)
            print(f"[Test] {fn.__name__} FAILED: {type(e).__name__}: {e}")

    print("=" * 60)
    print(f"  {len(tests) - len(failed)}/{len(tests)} passed")
    print("=" * 60)
    return not failed
