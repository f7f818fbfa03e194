"""
app.py - Interface web JSON du laboratoire (journal des runs, profils homogènes)
"""
import os
from flask import Flask, jsonify, request
from dotenv import load_dotenv
load_dotenv()

from core.database import init_db, get_runs, get_run, get_check_stats, delete_runs
from obstacle.errors import LabError

app = Flask(__name__)

ADMIN_TOKEN = os.getenv("ADMIN_TOKEN", "")


@app.before_request
def setup():
    init_db()

# ─────────────────────────────────────────────
# API JSON
# ─────────────────────────────────────────────

@app.route("/api/runs")
def api_runs():
    limit = request.args.get("limit", 50, type=int)
    return jsonify(get_runs(limit=max(1, min(limit, 500))))

@app.route("/api/runs/<int:run_id>")
def api_run(run_id):
    run = get_run(run_id)
    if run is None:
        return jsonify({"error": f"run {run_id} introuvable"}), 404
    return jsonify(run)

@app.route("/api/checks/stats")
def api_check_stats():
    return jsonify(get_check_stats())

@app.route("/api/profiles/<family>/<int:m>")
def api_profile(family, m):
    from obstacle.homogeneous import HomogeneousProfile, profile_sets
    s = request.args.get("s", 0.5, type=float)
    try:
        profile = HomogeneousProfile(family, m, s)
        payload = profile.to_dict()
        payload["admissible"] = profile.admissible
        if profile.admissible:
            payload["sets"] = {k: v.describe() for k, v in profile_sets(profile).items()}
        return jsonify(payload)
    except LabError as e:
        return jsonify({"error": str(e)}), 400

@app.route("/api/admin/purge-runs", methods=["POST"])
def api_purge_runs():
    d = request.get_json(silent=True) or {}
    if ADMIN_TOKEN and d.get("token") != ADMIN_TOKEN:
        return jsonify({"error": "token invalide"}), 403
    try:
        deleted = delete_runs()
        return jsonify({"ok": True, "deleted": deleted})
    except Exception as e:
        return jsonify({"error": str(e)}), 500
