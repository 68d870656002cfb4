"""Initial migration - create sweeps, runs, and stage_artifacts tables

Revision ID: 001
Revises:
Create Date: 2026-10-16 00:00:00.000000

"""
from alembic import op
import sqlalchemy as sa

# revision identifiers, used by Alembic.
revision = '001'
down_revision = None
branch_labels = None
depends_on = None


def upgrade() -> None:
    # Create sweeps table
    op.create_table(
        'sweeps',
        sa.Column('id', sa.Integer(), nullable=False),
        sa.Column('name', sa.String(length=200), nullable=False),
        sa.Column('n_points', sa.Integer(), nullable=False),
        sa.Column('best_run_key', sa.String(length=64), nullable=True),
        sa.Column('created_at', sa.DateTime(timezone=True), server_default=sa.func.now(), nullable=True),
        sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_sweeps_id'), 'sweeps', ['id'], unique=False)

    # Create runs table
    op.create_table(
        'runs',
        sa.Column('id', sa.Integer(), nullable=False),
        sa.Column('run_key', sa.String(length=64), nullable=False),
        sa.Column('representation', sa.Enum('tfidf', 'cluwords', 'neice', name='representationkind'), nullable=False),
        sa.Column('alpha_word', sa.Float(), nullable=True),
        sa.Column('alpha_ent', sa.Float(), nullable=True),
        sa.Column('n_topics', sa.Integer(), nullable=False),
        sa.Column('seed', sa.Integer(), nullable=False),
        sa.Column('status', sa.Enum('succeeded', 'failed', name='runstatus'), nullable=False),
        sa.Column('mean_cv', sa.Float(), nullable=True),
        sa.Column('error', sa.Text(), nullable=True),
        sa.Column('output_dir', sa.String(length=1024), nullable=True),
        sa.Column('config_json', sa.Text(), nullable=False),
        sa.Column('duration_seconds', sa.Float(), nullable=True),
        sa.Column('sweep_id', sa.Integer(), nullable=True),
        sa.Column('created_at', sa.DateTime(timezone=True), server_default=sa.func.now(), nullable=True),
        sa.ForeignKeyConstraint(['sweep_id'], ['sweeps.id'], ondelete='CASCADE'),
        sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_runs_id'), 'runs', ['id'], unique=False)
    op.create_index(op.f('ix_runs_run_key'), 'runs', ['run_key'], unique=False)

    # Create stage_artifacts table
    op.create_table(
        'stage_artifacts',
        sa.Column('id', sa.Integer(), nullable=False),
        sa.Column('stage', sa.String(length=50), nullable=False),
        sa.Column('key', sa.String(length=64), nullable=False),
        sa.Column('path', sa.String(length=1024), nullable=False),
        sa.Column('created_at', sa.DateTime(timezone=True), server_default=sa.func.now(), nullable=True),
        sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_stage_artifacts_id'), 'stage_artifacts', ['id'], unique=False)
    op.create_index(op.f('ix_stage_artifacts_key'), 'stage_artifacts', ['key'], unique=True)


def downgrade() -> None:
    op.drop_index(op.f('ix_stage_artifacts_key'), table_name='stage_artifacts')
    op.drop_index(op.f('ix_stage_artifacts_id'), table_name='stage_artifacts')
    op.drop_table('stage_artifacts')
    op.drop_index(op.f('ix_runs_run_key'), table_name='runs')
    op.drop_index(op.f('ix_runs_id'), table_name='runs')
    op.drop_table('runs')
    op.drop_index(op.f('ix_sweeps_id'), table_name='sweeps')
    op.drop_table('sweeps')

    # Drop enums (SQLite has none)
    if op.get_bind().dialect.name == 'postgresql':
        op.execute('DROP TYPE IF EXISTS runstatus')
        op.execute('DROP TYPE IF EXISTS representationkind')
