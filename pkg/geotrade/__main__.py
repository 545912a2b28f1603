"""Entry point for ``python -m geotrade``."""

from geotrade import create_cli


if __name__ == "__main__":
    create_cli()(prog_name="geotrade")
