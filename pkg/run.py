"""
Fog-node slicing simulator entrypoint.

Loads a `.env` file when present and dispatches to the command-line
interface in `app.cli`.

Examples:
    python run.py run --policy dqn --environment E3 --scenario 1 --seed 7
    python run.py matrix --config configs/default.toml --workers 4
    python run.py dynamic --adaptation online
    python run.py oracle --config configs/tiny.toml --compare-steps 100000
"""

from dotenv import load_dotenv

from app.cli import main

# Load environment variables from .env file
load_dotenv()

if __name__ == "__main__":
    raise SystemExit(main())
