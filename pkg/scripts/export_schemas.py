import sys
from pathlib import Path

from attnhar.models.schemas import SCHEMA_DIR, write_schemas


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else SCHEMA_DIR
    for path in write_schemas(out_dir):
        print(f"wrote {path}")


if __name__ == "__main__":
    try:
        main()
    except OSError as e:
        print(f"Schema export failed: {e}", file=sys.stderr)
        sys.exit(2)
