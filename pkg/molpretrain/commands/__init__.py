# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from pathlib import Path

COMMANDS_DIR = Path(__file__).parent

# every public module here is a subcommand, registered by its add_parser()
__all__ = sorted(
    path.stem for path in COMMANDS_DIR.glob("*.py") if not path.stem.startswith("_")
)
