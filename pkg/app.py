import sys

from twomatrix.cli import main

# --- ENTRY POINT ---
# `python app.py verify --model model.json` is the same as `python -m twomatrix verify ...`
if __name__ == "__main__":
    sys.exit(main())
