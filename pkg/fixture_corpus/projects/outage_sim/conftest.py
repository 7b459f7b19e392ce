"""Simulated infrastructure outage, scoped to whole iterations.

FIXTURE_OUTAGE=1 makes every test in this project fail. To stage an
outage for selected iterations of a campaign, list row numbers in
FIXTURE_OUTAGE_ROWS (comma or space separated); when the harness-provided
iteration number matches, the outage flag is raised for the entire run.
"""

import os

_rows = {
    token
    for token in os.environ.get("FIXTURE_OUTAGE_ROWS", "").replace(",", " ").split()
    if token
}
if os.environ.get("FLAKEMINER_ITERATION") in _rows:
    os.environ["FIXTURE_OUTAGE"] = "1"
