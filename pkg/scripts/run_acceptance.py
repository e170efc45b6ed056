"""Run the twelve built-in acceptance criteria and print one line each.

    python scripts/run_acceptance.py
"""

import sys

from truncoag import acceptance

if __name__ == "__main__":
    results = acceptance.run_all()
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    sys.exit(1 if failed else 0)
