"""Run the acceptance suite and print only the per-criterion verdict lines."""

import subprocess
import sys


def main():
    proc = subprocess.run([sys.executable, "-m", "pytest", "tests/test_acceptance.py", "-q", "-s",
                           "-p", "no:cacheprovider", *sys.argv[1:]], capture_output=True, text=True)
    lines = [ln for ln in proc.stdout.splitlines() if ln.startswith("criterion ")]
    print("\n".join(dict.fromkeys(lines)) or proc.stdout)
    sys.exit(proc.returncode)


if __name__ == "__main__":
    main()
