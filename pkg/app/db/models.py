from app.db.database import Base
from sqlalchemy import (
    JSON,
    CheckConstraint,
    Column,
    DateTime,
    Float,
    Integer,
    String,
    Text,
    Uuid,
)
from datetime import datetime, timezone
from uuid import uuid4


RUN_STATUSES = ("QUEUED", "IN_PROGRESS", "CONVERGED", "MAX_ITERS", "FAILED")


class ReconstructionRun(Base):
    __tablename__ = "reconstruction_runs"

    run_id = Column(Uuid(as_uuid=True), primary_key=True, default=uuid4)
    method = Column(String(10), nullable=False)
    mask_source = Column(String(10), nullable=False)
    n = Column(Integer, nullable=False)
    p_M = Column(Integer, nullable=True)
    p_I = Column(Integer, nullable=True)
    sparsity = Column(Integer, nullable=True)
    status = Column(
        String(20),
        CheckConstraint(
            "status IN ('QUEUED','IN_PROGRESS','CONVERGED','MAX_ITERS','FAILED')",
            name="reconstruction_run_status_check"
        ),
        nullable=False
    )
    iterations = Column(Integer, nullable=True)
    psnr_db = Column(Float, nullable=True)
    config_json = Column(JSON, nullable=True)
    output_dir = Column(Text, nullable=True)
    error_message = Column(Text, nullable=True)
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
    updated_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
