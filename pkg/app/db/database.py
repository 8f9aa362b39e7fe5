from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from app.config import get

engine = create_engine(get("MASKRECON_DATABASE_URL"))
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

Base = declarative_base()


def init_db(bind=None):
    """Create missing tables directly (SQLite ledgers); Postgres deployments use Alembic."""
    from app.db import models  # noqa: F401  register tables on Base
    Base.metadata.create_all(bind=bind or engine)
