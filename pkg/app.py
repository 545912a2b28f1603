"""Local entrypoint for the geotrade command-line interface."""

from geotrade import create_cli


# Build the command group through the package-level factory.
cli = create_cli()


if __name__ == "__main__":
    cli(prog_name="geotrade")
