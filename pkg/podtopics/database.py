"""
Database configuration and session management for the run registry.
"""
from contextlib import contextmanager
from functools import lru_cache

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

from podtopics.config import get_settings

# Create Base class for models
Base = declarative_base()


@lru_cache()
def get_engine() -> Engine:
    """Create the SQLAlchemy engine for the configured registry URL."""
    url = get_settings().DATABASE_URL
    if url.startswith("sqlite"):
        return create_engine(url, connect_args={"check_same_thread": False})
    return create_engine(url, pool_pre_ping=True, pool_size=10, max_overflow=20)


@lru_cache()
def get_session_factory() -> sessionmaker:
    """Create the session factory bound to the registry engine."""
    return sessionmaker(autocommit=False, autoflush=False, bind=get_engine())


def init_db() -> None:
    """Create registry tables that do not exist yet."""
    # Imported for their side effect of registering tables on Base.metadata
    from podtopics import models  # noqa: F401

    Base.metadata.create_all(bind=get_engine())


@contextmanager
def get_db():
    """
    Context manager for a registry session.
    Yields a database session and ensures it's closed after use.
    """
    db = get_session_factory()()
    try:
        yield db
    finally:
        db.close()
