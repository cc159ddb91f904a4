# Copyright 2024
# Directory: ContourMARL/main.py

"""
Entry point forwarding to the command-line interface in app/main.py.
"""

import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
