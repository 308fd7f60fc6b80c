"""
ANSI Color Codes for SAMO Terminal Output

Centralized color definitions used across the project.
Setting NO_COLOR in the environment turns every code into an empty string.
"""

import os

_ENABLED = "NO_COLOR" not in os.environ


def _code(sequence: str) -> str:
    return sequence if _ENABLED else ""


# Reset
RESET = _code("\033[0m")

# Green shades
GREEN = _code("\033[38;5;158m")  # Section titles, success marks
DARK_GREEN = _code("\033[38;5;49m")

# Yellow shades
LIGHT_YELLOW = _code("\033[38;5;230m")  # Table bodies
DARK_YELLOW = _code("\033[38;5;228m")  # Table headers

# Pink/Magenta shades
LIGHT_PINK = _code("\033[38;5;225m")  # Attractor updates

# Red
RED = _code("\033[38;5;174m")  # Errors

# Gray shades
GRAY = _code("\033[38;5;245m")  # Secondary info
