"""
obstacle/handlers.py — Handlers des sous-commandes CLI
Chaque fonction est appelée depuis main.py et renvoie un code de sortie.
"""
import os
import logging

from obstacle.errors import ConfigError, LabError
from obstacle.jobs import EXIT_FAIL, EXIT_OK, EXIT_USAGE

log = logging.getLogger(__name__)

RUN_LEDGER = os.getenv("RUN_LEDGER", "1") not in ("0", "false", "no", "")

COMMAND_ANALYSES = {
    "solve":     (),
    "frequency": ("frequency", "identities"),
    "blowup":    ("blowup",),
    "geometry":  ("geometry",),
}


# ─────────────────────────────────────────────
# TABLES TEXTE
# ─────────────────────────────────────────────

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "oui" if v else "non"
    if isinstance(v, float):
        return f"{v:.6g}"
    if v is None:
        return "-"
    return str(v)


def format_checks(checks: list) -> str:
    """Tableau aligné nom / statut / valeur / seuil."""
    if not checks:
        return "  (aucun check)"
    width = max(len(c["name"]) for c in checks)
    lines = []
    for c in checks:
        status = "OK   " if c["passed"] else "ÉCHEC"
        line = f"  {c['name']:<{width}}  {status}  {_fmt(c.get('value')):>12}  seuil {_fmt(c.get('threshold'))}"
        if c.get("error"):
            line += f"  ({c['error']})"
        lines.append(line)
    return "\n".join(lines)


def format_verify(summary: dict) -> str:
    lines = [f"Vérification {summary['level']} (h = {summary['h']:.6g}, h 3D = {summary['h_3d']:.6g})"]
    for crit in summary["criteria"]:
        lines.append(f"\n{'✅' if crit['passed'] else '❌'} {crit['name']}")
        lines.append(format_checks(crit["checks"]))
    lines.append(f"\n{'Tous les critères passent.' if summary['passed'] else 'Au moins un critère échoue.'}")
    return "\n".join(lines)


def format_runs(runs: list) -> str:
    if not runs:
        return "📭 Aucun run enregistré."
    lines = [f"{'id':>5}  {'commande':<10} {'scénario':<24} exit  date"]
    for r in runs:
        lines.append(
            f"{r['id']:>5}  {(r.get('command') or ''):<10} {(r.get('scenario') or '-'):<24} "
            f"{r.get('exit_code')!s:>4}  {r.get('created_at')}"
        )
    return "\n".join(lines)


# ─────────────────────────────────────────────
# LEDGER
# ─────────────────────────────────────────────

def _record(command: str, scenario, level, exit_code: int, out_dir, summary: dict, checks: list):
    if not RUN_LEDGER:
        return None
    from core.database import init_db, save_run
    try:
        init_db()
        return save_run({
            "scenario": scenario, "command": command, "level": level,
            "exit_code": exit_code, "out_dir": out_dir,
            "summary": summary, "checks": checks,
        })
    except Exception as e:
        log.warning(f"[Ledger] Run non enregistré : {e}")
        return None


# ─────────────────────────────────────────────
# HANDLERS
# ─────────────────────────────────────────────

def handle_scenario(command: str, config_path: str, out_dir: str = None) -> int:
    from obstacle.jobs import load_scenario, run_scenario

    if not config_path:
        print("❌ --config est obligatoire")
        return EXIT_USAGE
    try:
        config = load_scenario(config_path)
    except ConfigError as e:
        print(f"❌ Configuration invalide : {e}")
        return EXIT_USAGE
    config = config.restricted(COMMAND_ANALYSES[command]) if command != "run" else config

    summary = run_scenario(config, out_dir)
    print(f"📊 {config.name} ({command})")
    print(format_checks(summary.get("checks", [])))
    _record(command, config.name, None, summary["exit_code"], out_dir or config.output, summary,
            summary.get("checks", []))
    return summary["exit_code"]


def handle_verify(level: str, out_dir: str = None) -> int:
    from core.reports import emit_report
    from obstacle.jobs import verify_suite

    try:
        summary = verify_suite(level)
    except ConfigError as e:
        print(f"❌ {e}")
        return EXIT_USAGE
    except LabError as e:
        print(f"❌ Vérification interrompue : {e}")
        return EXIT_FAIL
    print(format_verify(summary))
    if out_dir:
        emit_report({"summary": summary}, out_dir)
    checks = [c for crit in summary["criteria"] for c in crit["checks"]]
    _record("verify", None, level, summary["exit_code"], out_dir, summary, checks)
    return summary["exit_code"]


def handle_ledger(limit: int = 20) -> int:
    from core.database import get_runs, init_db

    init_db()
    print(format_runs(get_runs(limit)))
    return EXIT_OK
