# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Process-wide switches read from the environment at import time."""

import os
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

DEBUG = bool(os.getenv("DEBUG"))
HAS_ANSI = not (os.getenv("NO_ANSI") or os.getenv("NO_COLOR")) and (
    (hasattr(sys.stdout, "isatty") and sys.stdout.isatty())
    or os.getenv("TERM", "") == "ANSI"
)

# run log location, ~/.molpretrain unless overridden
STATE_PATH = os.environ.get(
    "MOLPRETRAIN_STATE_PATH", str(Path.home() / ".molpretrain")
)

MOLPRETRAIN_NAME = "MolPretrain"  # PyPi package name


def _package_version() -> str:
    try:
        return version("molpretrain")
    except PackageNotFoundError:
        # running from a source checkout
        return "0.0.0"


MOLPRETRAIN_VERSION = _package_version()
