"""Local artifact files written by the command line tools.

Writes are protected by a filelock.SoftFileLock on "<path>.lock" so that
concurrent runs targeting the same output do not interleave.
"""
import hashlib
import logging
import os
from contextlib import contextmanager
from typing import Optional

from filelock import BaseFileLock, SoftFileLock

logger = logging.getLogger(__name__)


class AbsPath:
    """
    Class constants:
        LOCK_FILE_EXT:
            Lock file's extension (.lock).
        LOCK_TIMEOUT:
            Lock file timeout in seconds (-1 for no timeout).
        MANIFEST_EXT:
            Extension of the run manifest written next to an output.
        MD5_CALC_CHUNK_SIZE:
            Chunk size to calculate md5 hash of a local file.
    """

    LOCK_FILE_EXT: str = ".lock"
    LOCK_TIMEOUT: int = 900
    MANIFEST_EXT: str = ".manifest.json"
    MD5_CALC_CHUNK_SIZE: int = 4096

    def __init__(self, path):
        if isinstance(path, AbsPath):
            path = path.uri
        self._uri = os.path.abspath(os.path.expanduser(str(path)))

    def __repr__(self):
        return self._uri

    def __str__(self):
        return self._uri

    @property
    def uri(self) -> str:
        return self._uri

    @property
    def dirname(self) -> str:
        return os.path.dirname(self._uri)

    @property
    def basename(self) -> str:
        return os.path.basename(self._uri)

    @property
    def exists(self) -> bool:
        return os.path.exists(self._uri)

    @property
    def md5(self) -> str:
        """Md5 hash hexadecimal digest string."""
        return self.__calc_md5sum()

    @property
    def manifest_path(self) -> "AbsPath":
        return AbsPath(self._uri + AbsPath.MANIFEST_EXT)

    def get_lock(self, no_lock=False, timeout=None) -> BaseFileLock:
        """
        Args:
            no_lock: make it a dummy lock (for better code readability for context)
        """
        if no_lock:
            return contextmanager(lambda: (yield))()
        if timeout is None:
            timeout = AbsPath.LOCK_TIMEOUT
        self.mkdir_dirname()
        return SoftFileLock(self._uri + AbsPath.LOCK_FILE_EXT, timeout=timeout)

    def read(self) -> str:
        with open(self._uri, encoding="utf-8") as fp:
            return fp.read()

    def write(self, s: str, no_lock=False):
        """Write text to file. It is protected by a locking mechanism."""
        with self.get_lock(no_lock=no_lock):
            self.mkdir_dirname()
            with open(self._uri, "w", encoding="utf-8", newline="") as fp:
                fp.write(s)
        logger.debug("write: done. path={p}, size={s}".format(p=self._uri, s=len(s)))

    def rm(self, no_lock=False):
        with self.get_lock(no_lock=no_lock):
            os.remove(self._uri)

    def mkdir_dirname(self):
        """Create a directory but raise if no write permission on it"""
        os.makedirs(self.dirname, exist_ok=True)
        if not os.access(self.dirname, os.W_OK):
            raise PermissionError(
                "No permission to write on directory: {d}".format(d=self.dirname)
            )

    def __calc_md5sum(self):
        hash_md5 = hashlib.md5()
        with open(self._uri, "rb") as fp:
            for chunk in iter(lambda: fp.read(AbsPath.MD5_CALC_CHUNK_SIZE), b""):
                hash_md5.update(chunk)
        return hash_md5.hexdigest()

    @staticmethod
    def init_abspath(
        lock_file_ext: Optional[str] = None,
        lock_timeout: Optional[int] = None,
        manifest_ext: Optional[str] = None,
        md5_calc_chunk_size: Optional[int] = None,
    ):
        if lock_file_ext is not None:
            AbsPath.LOCK_FILE_EXT = lock_file_ext
        if lock_timeout is not None:
            AbsPath.LOCK_TIMEOUT = lock_timeout
        if manifest_ext is not None:
            AbsPath.MANIFEST_EXT = manifest_ext
        if md5_calc_chunk_size is not None:
            AbsPath.MD5_CALC_CHUNK_SIZE = md5_calc_chunk_size
