"""
SQLite database for experiment run history.
"""
import os
import sqlite3
from datetime import datetime, timezone
from typing import Any

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DEFAULT_DB_PATH = os.path.join(BASE_DIR, "runs.db")


def db_path() -> str:
    return os.environ.get("PI_RUNS_DB", "").strip() or DEFAULT_DB_PATH


def get_connection() -> sqlite3.Connection:
    conn = sqlite3.connect(db_path())
    conn.row_factory = sqlite3.Row
    return conn


def init_db() -> None:
    """Create runs table if it does not exist."""
    conn = get_connection()
    try:
        conn.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                experiment TEXT NOT NULL,
                started_at TEXT NOT NULL,
                config_hash TEXT,
                seed TEXT,
                status TEXT NOT NULL,
                exit_code INTEGER NOT NULL,
                out_dir TEXT
            )
        """)
        conn.commit()
    finally:
        conn.close()


def insert_run(
    experiment: str,
    config_hash: str | None,
    seed: int | None,
    status: str,
    out_dir: str | None,
    exit_code: int,
) -> int:
    """Insert a run and return its id."""
    init_db()
    conn = get_connection()
    try:
        started_at = datetime.now(timezone.utc).isoformat()
        cur = conn.execute(
            """INSERT INTO runs (
                experiment, started_at, config_hash, seed, status, exit_code, out_dir
            ) VALUES (?, ?, ?, ?, ?, ?, ?)""",
            (
                experiment,
                started_at,
                config_hash,
                None if seed is None else str(seed),  # u64 does not fit sqlite INTEGER
                status,
                exit_code,
                out_dir,
            ),
        )
        conn.commit()
        return cur.lastrowid or 0
    finally:
        conn.close()


def get_recent_runs(limit: int = 5) -> list[dict[str, Any]]:
    """Return the last N runs, newest first."""
    init_db()
    conn = get_connection()
    try:
        rows = conn.execute(
            "SELECT id, experiment, started_at, config_hash, seed, status, exit_code, out_dir FROM runs ORDER BY id DESC LIMIT ?",
            (limit,),
        ).fetchall()
        return [dict(r) for r in rows]
    finally:
        conn.close()
