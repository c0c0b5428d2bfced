"""Small shared helpers: atomic file writes and deterministic hashing."""

import hashlib
import os
import tempfile
from contextlib import contextmanager


@contextmanager
def atomic_write(path, mode="w"):
    """Write a file atomically: data goes to a temp file, then os.replace.

    Interrupted runs never leave a partial artifact at `path`.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def content_hash(*arrays):
    """SHA-256 over array dtypes, shapes and raw bytes; stable across runs."""
    digest = hashlib.sha256()
    for arr in arrays:
        digest.update(str(arr.dtype).encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()
