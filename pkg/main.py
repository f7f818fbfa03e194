"""
main.py — Point d'entrée unique du laboratoire d'obstacle mince
"""
import argparse
import sys
import os
import logging

from dotenv import load_dotenv

load_dotenv()
logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(message)s")

# Ajoute la racine du projet au path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

COMMANDS = ("solve", "frequency", "blowup", "geometry", "run", "verify", "serve", "ledger")


def parse_args(argv):
    parser = argparse.ArgumentParser(prog="main.py", description="Problème d'obstacle mince pondéré |x_{n+1}|^a")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="scénario JSON")
    parser.add_argument("--out", help="répertoire des rapports")
    parser.add_argument("--level", default="fast", help="fast | full (verify)")
    parser.add_argument("--limit", type=int, default=20, help="nombre de runs (ledger)")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2

    command = args.command
    if command in ("solve", "frequency", "blowup", "geometry", "run"):
        from obstacle.handlers import handle_scenario
        return handle_scenario(command, args.config, args.out)

    elif command == "verify":
        from obstacle.handlers import handle_verify
        return handle_verify(args.level, args.out)

    elif command == "ledger":
        from obstacle.handlers import handle_ledger
        return handle_ledger(args.limit)

    elif command == "serve":
        from app import app
        app.run(host="0.0.0.0", port=int(os.getenv("PORT", 5000)))
        return 0


if __name__ == "__main__":
    sys.exit(main())
