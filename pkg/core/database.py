"""
database.py - Journal des runs (PostgreSQL ou SQLite)

Utilise DATABASE_URL si défini (PostgreSQL).
Fallback SQLite (DB_PATH) sinon (dev local, tests).
Les requêtes sont écrites avec « ? » et converties pour psycopg2.
"""

import json
import os
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Optional

log = logging.getLogger(__name__)

DATABASE_URL = os.getenv("DATABASE_URL", "")


# ─────────────────────────────────────────────
# CONNEXION
# ─────────────────────────────────────────────

def is_postgres() -> bool:
    return bool(DATABASE_URL)


def _connect():
    if is_postgres():
        import psycopg2
        return psycopg2.connect(DATABASE_URL)
    import sqlite3
    db_path = os.getenv("DB_PATH", "thinlab.db")
    db_dir = os.path.dirname(db_path)
    if db_dir:
        os.makedirs(db_dir, exist_ok=True)
    return sqlite3.connect(db_path)


@contextmanager
def ledger_cursor():
    """Curseur sur le journal : commit en sortie normale, rollback sinon."""
    conn = _connect()
    try:
        cur = conn.cursor()
        yield cur
        conn.commit()
    except Exception:
        conn.rollback()
        raise
    finally:
        conn.close()


def _sql(query: str) -> str:
    return query.replace("?", "%s") if is_postgres() else query


def _mappings(cur, rows) -> list:
    cols = [d[0] for d in cur.description]
    return [dict(zip(cols, row)) for row in rows]


# ─────────────────────────────────────────────
# ENREGISTREMENTS
# ─────────────────────────────────────────────

def _number(v) -> Optional[float]:
    if isinstance(v, bool) or v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


@dataclass(frozen=True)
class RunRecord:
    id:         int
    scenario:   Optional[str]
    command:    Optional[str]
    level:      Optional[str]
    exit_code:  int
    out_dir:    Optional[str]
    created_at: Optional[str]

    @classmethod
    def from_row(cls, row: dict) -> "RunRecord":
        created = row.get("created_at")
        return cls(
            id=int(row["id"]),
            scenario=row.get("scenario"),
            command=row.get("command"),
            level=row.get("level"),
            exit_code=int(row.get("exit_code") or 0),
            out_dir=row.get("out_dir"),
            created_at=str(created) if created is not None else None,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CheckRecord:
    name:      str
    passed:    bool
    value:     Optional[float] = None
    threshold: Optional[float] = None

    @classmethod
    def from_check(cls, check: dict) -> "CheckRecord":
        """Depuis un check de rapport (valeurs non numériques → None)."""
        return cls(
            name=str(check.get("name")),
            passed=bool(check.get("passed")),
            value=_number(check.get("value")),
            threshold=_number(check.get("threshold")),
        )

    @classmethod
    def from_row(cls, row: dict) -> "CheckRecord":
        return cls(row["name"], bool(row["passed"]), row.get("value"), row.get("threshold"))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CheckStat:
    name:   str
    total:  int
    passed: int

    @property
    def pass_rate(self) -> float:
        return round(self.passed / self.total * 100, 1) if self.total else 0.0

    @classmethod
    def from_row(cls, row: dict) -> "CheckStat":
        return cls(row["name"], int(row.get("total") or 0), int(row.get("passed") or 0))

    def to_dict(self) -> dict:
        return {**asdict(self), "pass_rate": self.pass_rate}


# ─────────────────────────────────────────────
# INIT
# ─────────────────────────────────────────────

def init_db():
    if is_postgres():
        serial, now = "SERIAL PRIMARY KEY", "NOW()"
    else:
        serial, now = "INTEGER PRIMARY KEY AUTOINCREMENT", "CURRENT_TIMESTAMP"
    with ledger_cursor() as cur:
        cur.execute(f"""
            CREATE TABLE IF NOT EXISTS runs (
                id           {serial},
                scenario     TEXT,
                command      TEXT,
                level        TEXT,
                exit_code    INTEGER,
                out_dir      TEXT,
                summary_json TEXT,
                created_at   TIMESTAMP DEFAULT {now}
            )
        """)
        cur.execute(f"""
            CREATE TABLE IF NOT EXISTS checks (
                id        {serial},
                run_id    INTEGER NOT NULL,
                name      TEXT NOT NULL,
                passed    INTEGER DEFAULT 0,
                value     REAL,
                threshold REAL
            )
        """)
    log.info("[DB] Journal initialisé.")


# ─────────────────────────────────────────────
# RUNS
# ─────────────────────────────────────────────

def save_run(run: dict) -> int:
    """
    Enregistre un run et ses checks.
    run = {scenario, command, level, exit_code, out_dir, summary, checks: [{name, passed, value, threshold}]}
    """
    checks = [CheckRecord.from_check(c) for c in run.get("checks") or []]
    values = (
        run.get("scenario"), run.get("command"), run.get("level"),
        int(run.get("exit_code", 0)), run.get("out_dir"),
        json.dumps(run.get("summary") or {}, default=str),
    )
    insert = """
        INSERT INTO runs (scenario, command, level, exit_code, out_dir, summary_json)
        VALUES (?, ?, ?, ?, ?, ?)
    """
    with ledger_cursor() as cur:
        if is_postgres():
            cur.execute(_sql(insert + " RETURNING id"), values)
            run_id = cur.fetchone()[0]
        else:
            cur.execute(insert, values)
            run_id = cur.lastrowid
        cur.executemany(
            _sql("INSERT INTO checks (run_id, name, passed, value, threshold) VALUES (?, ?, ?, ?, ?)"),
            [(run_id, c.name, int(c.passed), c.value, c.threshold) for c in checks],
        )
    log.info(f"[DB] Run #{run_id} enregistré ({run.get('command')}, exit {run.get('exit_code')}, {len(checks)} checks)")
    return run_id


def get_runs(limit: int = 50) -> list:
    with ledger_cursor() as cur:
        cur.execute(_sql("""
            SELECT id, scenario, command, level, exit_code, out_dir, created_at
            FROM runs
            ORDER BY id DESC
            LIMIT ?
        """), (limit,))
        return [RunRecord.from_row(row).to_dict() for row in _mappings(cur, cur.fetchall())]


def get_run(run_id: int):
    """Run complet (résumé décodé + checks), None si absent."""
    with ledger_cursor() as cur:
        cur.execute(_sql("SELECT * FROM runs WHERE id = ?"), (run_id,))
        rows = _mappings(cur, cur.fetchall())
        if not rows:
            return None
        run = RunRecord.from_row(rows[0]).to_dict()
        run["summary"] = json.loads(rows[0].get("summary_json") or "{}")
        cur.execute(_sql("""
            SELECT name, passed, value, threshold
            FROM checks WHERE run_id = ?
            ORDER BY id
        """), (run_id,))
        run["checks"] = [CheckRecord.from_row(row).to_dict() for row in _mappings(cur, cur.fetchall())]
        return run


def get_check_stats() -> list:
    """Taux de réussite par nom de check."""
    with ledger_cursor() as cur:
        cur.execute("""
            SELECT name,
                COUNT(*) as total,
                SUM(CASE WHEN passed = 1 THEN 1 ELSE 0 END) as passed
            FROM checks
            GROUP BY name
            ORDER BY name
        """)
        return [CheckStat.from_row(row).to_dict() for row in _mappings(cur, cur.fetchall())]


def delete_runs() -> int:
    """Vide le journal, renvoie le nombre de runs supprimés."""
    with ledger_cursor() as cur:
        cur.execute("SELECT COUNT(*) FROM runs")
        count = cur.fetchone()[0]
        cur.execute("DELETE FROM checks")
        cur.execute("DELETE FROM runs")
    log.info(f"[DB] {count} runs supprimés")
    return count
