"""
core/reports.py — Écriture des rapports (JSON, CSV, dump binaire)
Gère : to_json (flottants à 17 chiffres significatifs), write_csv,
write_frequency_csv, emit_report
"""
import csv
import json
import logging
import math
import os

import numpy as np

from obstacle.errors import ReportError

log = logging.getLogger(__name__)

REPORT_VERSION = 1
REPORT_DIR     = os.getenv("REPORT_DIR", "reports")


# ─────────────────────────────────────────────
# SÉRIALISATION
# ─────────────────────────────────────────────

def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _plain(obj):
    """Convertit numpy / tuples en types JSON natifs."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad  = " " * (indent * (level + 1))
    end  = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [_encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(pad + i for i in items) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(k, ensure_ascii=False)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(pad + i for i in items) + "\n" + end + "}"
    raise ReportError(f"Type non sérialisable : {type(obj).__name__}")


def to_json(obj, indent: int = 2) -> str:
    """JSON déterministe ; NaN et ±inf deviennent null."""
    return _encode(_plain(obj), indent, 0) + "\n"


# ─────────────────────────────────────────────
# FICHIERS
# ─────────────────────────────────────────────

def ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise ReportError(f"Impossible de créer {path} : {e}") from e
    if not os.access(path, os.W_OK):
        raise ReportError(f"Répertoire non inscriptible : {path}")
    return path


def write_json(path: str, obj) -> str:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(to_json(obj))
    except OSError as e:
        raise ReportError(f"Écriture impossible ({path}) : {e}") from e
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def write_csv(path: str, header: list, rows: list) -> str:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as e:
        raise ReportError(f"Écriture impossible ({path}) : {e}") from e
    return path


def frequency_rows(curve) -> tuple:
    """En-tête (cx, cy[, cz], r, H, D, E, I) et lignes d'une FrequencyCurve."""
    center = list(curve.center) + [0.0]
    names  = ["cx", "cy", "cz"][: len(center)]
    header = names + ["r", "H", "D", "E", "I"]
    rows   = [center + [row[k] for k in ("r", "H", "D", "E", "I")] for row in curve.rows()]
    return header, rows


def write_frequency_csv(path: str, curve) -> str:
    header, rows = frequency_rows(curve)
    return write_csv(path, header, rows)


def emit_report(results: dict, out_dir: str) -> list:
    """
    results = {
        "summary": dict,                      # toujours écrit (summary.json)
        "json":    {nom: objet},
        "csv":     {nom: (en-tête, lignes)},
        "fields":  {nom: ScalarField},        # dump binaire .tfb
    }
    Renvoie la liste triée des fichiers écrits.
    """
    from obstacle.weighted_grid import write_field_dump

    ensure_dir(out_dir)
    written = []
    for name, field in sorted((results.get("fields") or {}).items()):
        path = os.path.join(out_dir, f"{name}.tfb")
        try:
            write_field_dump(field, path)
        except OSError as e:
            raise ReportError(f"Écriture impossible ({path}) : {e}") from e
        written.append(path)
    for name, (header, rows) in sorted((results.get("csv") or {}).items()):
        written.append(write_csv(os.path.join(out_dir, f"{name}.csv"), header, rows))
    for name, obj in sorted((results.get("json") or {}).items()):
        written.append(write_json(os.path.join(out_dir, f"{name}.json"), obj))

    summary = dict(results.get("summary") or {})
    summary["report_version"] = REPORT_VERSION
    summary["files"] = sorted(os.path.basename(p) for p in written)
    written.append(write_json(os.path.join(out_dir, "summary.json"), summary))
    log.info(f"[Rapports] {len(written)} fichiers écrits dans {out_dir}")
    return sorted(written)
