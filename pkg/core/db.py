from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from sqlalchemy import Engine, create_engine
from sqlalchemy.orm import Session, sessionmaker

from core.errors import IoError
from core.settings import PROJECT_ROOT, get_setting

logger = logging.getLogger(__name__)

DEFAULT_DB_PATH = PROJECT_ROOT / "var" / "bench_runs.sqlite3"
HOME_DB_PATH = Path.home() / ".pecl-testbench" / "bench_runs.sqlite3"

_engine: Engine | None = None
_session_factory: sessionmaker[Session] | None = None


def _ensure_sqlite_db(path: Path) -> bool:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if not path.exists():
            path.touch()
        # check writability
        with path.open("ab"):
            pass
        return True
    except OSError:
        return False


def _resolve_db_path() -> Path:
    override = get_setting("BENCH_DB_PATH")
    if override:
        candidate = Path(override).expanduser()
        if not candidate.is_absolute():
            candidate = (PROJECT_ROOT / candidate).resolve()
        if not _ensure_sqlite_db(candidate):
            raise IoError(f"지정한 BENCH_DB_PATH({candidate})를 준비할 수 없습니다.")
        return candidate

    for idx, candidate in enumerate([DEFAULT_DB_PATH, HOME_DB_PATH]):
        if _ensure_sqlite_db(candidate):
            if idx > 0:
                logger.warning("db_fallback path=%s", candidate)
            return candidate

    raise IoError("쓰기 가능한 SQLite 경로를 찾을 수 없습니다. BENCH_DB_PATH 또는 BENCH_DB_URL을 설정해 주세요.")


def resolve_db_url() -> str:
    override = get_setting("BENCH_DB_URL")
    if override:
        return override
    return f"sqlite:///{_resolve_db_path().as_posix()}"


def get_engine() -> Engine:
    global _engine, _session_factory
    if _engine is None:
        url = resolve_db_url()
        connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
        _engine = create_engine(url, echo=False, future=True, connect_args=connect_args)
        _session_factory = sessionmaker(
            bind=_engine,
            autoflush=False,
            autocommit=False,
            future=True,
            expire_on_commit=False,
        )
    return _engine


def reset_engine() -> None:
    """Drop the cached engine so the next session re-reads the DB settings."""
    global _engine, _session_factory
    if _engine is not None:
        _engine.dispose()
    _engine = None
    _session_factory = None


def init_db() -> None:
    from core.models import Base

    Base.metadata.create_all(get_engine())


@contextmanager
def db_session() -> Iterator[Session]:
    get_engine()
    assert _session_factory is not None
    session = _session_factory()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
