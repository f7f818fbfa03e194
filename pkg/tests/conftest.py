import os
import sys

import hypothesis
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture
def ledger_db(tmp_path, monkeypatch):
    """Journal SQLite isolé dans tmp_path."""
    import core.database as db

    monkeypatch.setenv("DB_PATH", str(tmp_path / "runs.db"))
    monkeypatch.setattr(db, "DATABASE_URL", "")
    db.init_db()
    return db
