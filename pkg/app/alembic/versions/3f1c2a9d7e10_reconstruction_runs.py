"""reconstruction runs ledger

Revision ID: 3f1c2a9d7e10
Revises: 
Create Date: 2026-10-17 12:05:41.118204

"""
from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa

# revision identifiers, used by Alembic.
revision: str = '3f1c2a9d7e10'
down_revision: Union[str, None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    op.create_table('reconstruction_runs',
    sa.Column('run_id', sa.Uuid(), nullable=False),
    sa.Column('method', sa.String(length=10), nullable=False),
    sa.Column('mask_source', sa.String(length=10), nullable=False),
    sa.Column('n', sa.Integer(), nullable=False),
    sa.Column('p_M', sa.Integer(), nullable=True),
    sa.Column('p_I', sa.Integer(), nullable=True),
    sa.Column('sparsity', sa.Integer(), nullable=True),
    sa.Column('status', sa.String(length=20), nullable=False),
    sa.Column('iterations', sa.Integer(), nullable=True),
    sa.Column('psnr_db', sa.Float(), nullable=True),
    sa.Column('config_json', sa.JSON(), nullable=True),
    sa.Column('output_dir', sa.Text(), nullable=True),
    sa.Column('error_message', sa.Text(), nullable=True),
    sa.Column('created_at', sa.DateTime(), nullable=True),
    sa.Column('updated_at', sa.DateTime(), nullable=True),
    sa.CheckConstraint(
        "status IN ('QUEUED','IN_PROGRESS','CONVERGED','MAX_ITERS','FAILED')",
        name='reconstruction_run_status_check'
    ),
    sa.PrimaryKeyConstraint('run_id')
    )


def downgrade() -> None:
    op.drop_table('reconstruction_runs')
